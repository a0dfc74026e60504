//! Tidy data files and a standalone matplotlib script for the standard figure types.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::batch::quantile;

const METRICS: [&str; 6] = ["t_g", "t_s", "d_g", "d_f", "psi_g", "psi_f"];

const SCRIPT: &str = include_str!("plot_template.py");

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Argument(format!("`{}` is empty", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    Ok((header, rows))
}

fn col(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Format(format!("missing column `{name}`")))
}

/// Writes `plot.py` plus `episodes.csv`, `boxplot.csv`, and when available `curve_*.csv`,
/// `radial.csv` and `selections.csv` into `<batch_dir>/plots`. Returns that directory.
pub fn export_plots(batch_dir: &Path) -> Result<PathBuf> {
    let mut labels: Vec<PathBuf> = fs::read_dir(batch_dir)
        .map_err(|e| Error::Argument(format!("cannot read batch directory `{}`: {e}", batch_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("metrics.csv").exists())
        .collect();
    labels.sort();
    let curves: Vec<PathBuf> = {
        let mut v: Vec<PathBuf> = fs::read_dir(batch_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with("_curve.csv"))
            .collect();
        v.sort();
        v
    };
    if labels.is_empty() && curves.is_empty() {
        return Err(Error::Argument(format!(
            "`{}` holds no batch results (no */metrics.csv) and no learning curves",
            batch_dir.display()
        )));
    }
    let out = batch_dir.join("plots");
    fs::create_dir_all(&out)?;

    let mut episodes = String::from("label,seed,success");
    for m in METRICS {
        episodes.push_str(&format!(",{m}"));
    }
    episodes.push('\n');
    let mut boxes = String::from("label,metric,median,q1,q3,n\n");
    let mut radial = String::from("label,seed,time,mean_dist,rho_g\n");
    let mut timeline = String::from("label,seed,time,herder,target\n");
    let mut any_traj = false;
    for dir in &labels {
        let label = dir.file_name().unwrap().to_string_lossy().into_owned();
        let (header, rows) = read_rows(&dir.join("metrics.csv"))?;
        let per_episode: Vec<&Vec<String>> = rows.iter().filter(|r| r[0].parse::<u64>().is_ok()).collect();
        for r in &per_episode {
            episodes.push_str(&format!("{label},{},{}", r[0], r[col(&header, "success")?]));
            for m in METRICS {
                episodes.push_str(&format!(",{}", r[col(&header, m)?]));
            }
            episodes.push('\n');
        }
        for m in METRICS {
            let c = col(&header, m)?;
            let v: Vec<f64> = per_episode.iter().filter_map(|r| r[c].parse().ok()).collect();
            boxes.push_str(&format!(
                "{label},{m},{},{},{},{}\n",
                quantile(&v, 0.5),
                quantile(&v, 0.25),
                quantile(&v, 0.75),
                v.len()
            ));
        }
        let traj_dir = dir.join("trajectories");
        if traj_dir.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(&traj_dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
            files.sort();
            for f in files {
                let seed = f
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .and_then(|s| s.strip_prefix("seed_"))
                    .unwrap_or("0")
                    .to_string();
                export_trajectory(&f, &label, &seed, &mut radial, &mut timeline)?;
                any_traj = true;
            }
        }
    }
    if !labels.is_empty() {
        fs::write(out.join("episodes.csv"), episodes)?;
        fs::write(out.join("boxplot.csv"), boxes)?;
    }
    if any_traj {
        fs::write(out.join("radial.csv"), radial)?;
        fs::write(out.join("selections.csv"), timeline)?;
    }
    for c in curves {
        let name = c.file_name().unwrap().to_string_lossy().replace("_curve.csv", "");
        fs::copy(&c, out.join(format!("curve_{name}.csv")))?;
    }
    fs::write(out.join("plot.py"), SCRIPT)?;
    Ok(out)
}

/// Appends the radial-distance trace and the per-step, per-herder selections of one log.
fn export_trajectory(path: &Path, label: &str, seed: &str, radial: &mut String, timeline: &mut String) -> Result<()> {
    let (header, rows) = read_rows(path)?;
    let t = col(&header, "time")?;
    let gx = col(&header, "goal_x")?;
    let gy = col(&header, "goal_y")?;
    let targets: Vec<(usize, usize)> = (0..)
        .map_while(|i| Some((col(&header, &format!("t{i}_x")).ok()?, col(&header, &format!("t{i}_y")).ok()?)))
        .collect();
    let sels: Vec<usize> = (0..).map_while(|j| col(&header, &format!("h{j}_sel")).ok()).collect();
    let rho_g = 5.0;
    let num = |r: &Vec<String>, c: usize| r[c].parse::<f64>().unwrap_or(f64::NAN);
    for r in &rows {
        let (x0, y0) = (num(r, gx), num(r, gy));
        let mean = targets
            .iter()
            .map(|&(cx, cy)| ((num(r, cx) - x0).powi(2) + (num(r, cy) - y0).powi(2)).sqrt())
            .sum::<f64>()
            / targets.len().max(1) as f64;
        radial.push_str(&format!("{label},{seed},{},{mean},{rho_g}\n", r[t]));
        for (j, &c) in sels.iter().enumerate() {
            timeline.push_str(&format!("{label},{seed},{},{j},{}\n", r[t], r[c]));
        }
    }
    Ok(())
}
