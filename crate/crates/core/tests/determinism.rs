mod common;

use shepherd_core::episode::run_episode;
use shepherd_core::harness::{run_batch, ExperimentConfig};
use shepherd_core::baselines::{P2PConfig, P2PController};
use shepherd_core::episode::EpisodeSpec;
use shepherd_core::sim::SimParams;

#[test]
fn eval_reruns_are_byte_identical() {
    let o = common::determinism();
    println!("{}", o.detail);
    assert!(o.pass, "{}", o.detail);
}

#[test]
fn seeded_episodes_repeat_bit_for_bit() {
    let params = SimParams::nominal(2, 5);
    let spec = EpisodeSpec {
        t_max: 20.0,
        ..EpisodeSpec::selection()
    };
    let run = || {
        let mut c = P2PController::new(P2PConfig::default());
        run_episode(&mut c, &params, 77, &spec).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn worker_count_does_not_change_rows() {
    let rows = |workers: &str| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::default();
        for (k, v) in [
            ("scenario", "select-2v5"),
            ("policy", "heuristic_p2p"),
            ("episodes", "5"),
            ("workers", workers),
            ("output_dir", dir.path().to_str().unwrap()),
        ] {
            cfg.set(k, v).unwrap();
        }
        run_batch(&cfg).unwrap();
        let text = std::fs::read_to_string(dir.path().join("heuristic/metrics.csv")).unwrap();
        text.lines().filter(|l| !l.starts_with('#')).map(str::to_string).collect::<Vec<_>>()
    };
    assert_eq!(rows("1"), rows("3"));
}
