use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::SfmError;

/// Relative standard deviation of sampled force factors.
pub const NOISE_REL_SIGMA: f64 = 0.10;
/// Sampled force factors are truncated to `[1 - BAND, 1 + BAND] × base`.
pub const NOISE_TRUNCATION: f64 = 0.25;

/// How an agent's parameters were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParamMode {
    #[default]
    Default,
    Custom,
    Random,
}

impl ParamMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParamMode::Default => "default",
            ParamMode::Custom => "custom",
            ParamMode::Random => "random",
        }
    }
}

/// Social-force parameters of one agent. All forces are mass-normalised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfmParams {
    pub k_desired: f64,
    /// Relaxation time τ (s).
    pub relaxation_time: f64,
    pub k_obstacle: f64,
    /// Obstacle repulsion decay length (m).
    pub b_obstacle: f64,
    pub k_social: f64,
    /// Weight of the relative velocity in the interaction direction (λ).
    pub lambda: f64,
    /// Interaction range scale (γ).
    pub gamma: f64,
    /// Angular decay of the tangential (turning) term.
    pub n: f64,
    /// Angular decay of the velocity (deceleration) term.
    pub n_prime: f64,
    pub k_group_gaze: f64,
    pub k_group_coherence: f64,
    pub k_group_repulsion: f64,
    /// Neighbors farther than this are ignored (m).
    pub perception_radius: f64,
    pub mode: ParamMode,
}

pub fn default_params() -> SfmParams {
    SfmParams {
        k_desired: 1.0,
        relaxation_time: 0.5,
        k_obstacle: 10.0,
        b_obstacle: 0.2,
        k_social: 2.1,
        lambda: 2.0,
        gamma: 0.35,
        n: 2.0,
        n_prime: 3.0,
        k_group_gaze: 3.0,
        k_group_coherence: 2.0,
        k_group_repulsion: 1.0,
        perception_radius: 10.0,
        mode: ParamMode::Default,
    }
}

impl Default for SfmParams {
    fn default() -> Self {
        default_params()
    }
}

impl SfmParams {
    pub fn validate(&self) -> Result<(), SfmError> {
        let named = [
            ("k_desired", self.k_desired),
            ("relaxation_time", self.relaxation_time),
            ("k_obstacle", self.k_obstacle),
            ("b_obstacle", self.b_obstacle),
            ("k_social", self.k_social),
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("n", self.n),
            ("n_prime", self.n_prime),
            ("k_group_gaze", self.k_group_gaze),
            ("k_group_coherence", self.k_group_coherence),
            ("k_group_repulsion", self.k_group_repulsion),
            ("perception_radius", self.perception_radius),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(SfmError::InvalidParams(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("relaxation_time", self.relaxation_time),
            ("gamma", self.gamma),
            ("perception_radius", self.perception_radius),
            ("b_obstacle", self.b_obstacle),
        ] {
            if v <= 0.0 {
                return Err(SfmError::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// The noise-bearing force factors, in a fixed order.
    fn force_factors_mut(&mut self) -> [&mut f64; 6] {
        [
            &mut self.k_desired,
            &mut self.k_obstacle,
            &mut self.k_social,
            &mut self.k_group_gaze,
            &mut self.k_group_coherence,
            &mut self.k_group_repulsion,
        ]
    }
}

/// Draws every force factor from `Normal(f, 0.1·f)` truncated to
/// `[0.75·f, 1.25·f]`; shape parameters (τ, λ, γ, n, n′) are kept. The
/// result depends only on `base` and `seed`.
pub fn sample_params(base: &SfmParams, seed: u64) -> SfmParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = *base;
    for f in out.force_factors_mut() {
        let mean = *f;
        if mean == 0.0 {
            continue;
        }
        let normal = Normal::new(mean, NOISE_REL_SIGMA * mean).expect("finite sigma");
        let (lo, hi) = ((1.0 - NOISE_TRUNCATION) * mean, (1.0 + NOISE_TRUNCATION) * mean);
        *f = loop {
            let x = normal.sample(&mut rng);
            if (lo..=hi).contains(&x) {
                break x;
            }
        };
    }
    out.mode = ParamMode::Random;
    out
}
