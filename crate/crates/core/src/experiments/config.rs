use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::numerics::rng::Seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    InterpCorollary,
    SvmGeneralization,
    InterpBoundsSweep,
    SvmBoundsSweep,
    ParametricSweep,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::InterpCorollary,
        Scenario::SvmGeneralization,
        Scenario::InterpBoundsSweep,
        Scenario::SvmBoundsSweep,
        Scenario::ParametricSweep,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::InterpCorollary => "interp_corollary",
            Scenario::SvmGeneralization => "svm_generalization",
            Scenario::InterpBoundsSweep => "interp_bounds_sweep",
            Scenario::SvmBoundsSweep => "svm_bounds_sweep",
            Scenario::ParametricSweep => "parametric_sweep",
        }
    }

    pub fn is_sweep(&self) -> bool {
        matches!(
            self,
            Scenario::InterpBoundsSweep | Scenario::SvmBoundsSweep | Scenario::ParametricSweep
        )
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .iter()
            .copied()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scenario {s:?}")))
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One experiment. Missing JSON fields take the [`Default`] values.
///
/// For the Monte Carlo scenarios `n` is the sample size and `d` the input
/// dimension. The sweeps draw random instances with dimension up to `d`,
/// in-sample size up to `n` and out-sample size up to `n_out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub scenario: Scenario,
    pub seed: Seed,
    pub n: usize,
    pub d: usize,
    pub n_out: usize,
    pub kernel: KernelSpec,
    pub trials: usize,
    /// Teacher norm `B`.
    pub teacher_norm: f64,
    /// Inputs are drawn uniformly from the ball of this radius.
    pub radius: f64,
    /// Support of the classification distribution: `|f_teacher(x)| >= margin`.
    pub margin: f64,
    pub teacher_anchors: usize,
    /// Fresh draws per trial for the misclassification estimate.
    pub test_points: usize,
    /// Directions per instance in the quadratic-growth check.
    pub trial_dirs: usize,
    /// Random multiplier vectors per instance in the sandwich check.
    pub random_gammas: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            scenario: Scenario::InterpCorollary,
            seed: Seed(0),
            n: 20,
            d: 3,
            n_out: 10,
            kernel: KernelSpec::Gaussian { gamma: 1.0 },
            trials: 2000,
            teacher_norm: 2.0,
            radius: 2.0,
            margin: 1.0,
            teacher_anchors: 5,
            test_points: 100,
            trial_dirs: 20,
            random_gammas: 10,
        }
    }
}

impl TrialConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        let mut cfg = TrialConfig {
            scenario,
            ..TrialConfig::default()
        };
        match scenario {
            Scenario::InterpCorollary => {}
            Scenario::SvmGeneralization => {
                cfg.n = 50;
                cfg.trials = 1000;
                cfg.teacher_norm = 3.0;
            }
            Scenario::InterpBoundsSweep => {
                cfg.d = 5;
                cfg.trials = 1000;
            }
            Scenario::SvmBoundsSweep => {
                cfg.d = 5;
                cfg.n = 30;
                cfg.trials = 500;
            }
            Scenario::ParametricSweep => {
                cfg.d = 10;
                cfg.n = 50;
                cfg.trials = 1000;
            }
        }
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrialConfig = serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        TrialConfig::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let positive = [
            ("n", self.n),
            ("d", self.d),
            ("n_out", self.n_out),
            ("teacher_anchors", self.teacher_anchors),
            ("test_points", self.test_points),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid(format!("radius {} must be > 0", self.radius)));
        }
        if !(self.teacher_norm >= 0.0 && self.teacher_norm.is_finite()) {
            return Err(Error::invalid(format!("teacher norm {} must be >= 0", self.teacher_norm)));
        }
        if self.scenario == Scenario::SvmGeneralization {
            if !(self.teacher_norm > 0.0) {
                return Err(Error::invalid("classification teacher needs a positive norm"));
            }
            if !(self.margin >= 1.0 && self.margin.is_finite()) {
                return Err(Error::invalid(format!("margin {} must be >= 1", self.margin)));
            }
        }
        Ok(())
    }
}
