use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayForm {
    /// `ε₀·exp(−decay·episode)`
    Exponential,
    /// `ε₀ − decay·episode`
    Linear,
}

/// Exploration rate for `episode`, floored at `eps_min`.
pub fn epsilon_schedule(episode: usize, eps0: f64, eps_min: f64, decay: f64) -> f64 {
    epsilon_with(DecayForm::Exponential, episode, eps0, eps_min, decay)
}

pub fn epsilon_with(form: DecayForm, episode: usize, eps0: f64, eps_min: f64, decay: f64) -> f64 {
    let e = episode as f64;
    let raw = match form {
        DecayForm::Exponential => eps0 * (-decay * e).exp(),
        DecayForm::Linear => eps0 - decay * e,
    };
    raw.max(eps_min)
}
