use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RegularizationConfig;
use crate::solver::SolverConfig;
use crate::synth::{almostzero_preset, easy_preset, overlap_preset, PresetScale, SyntheticConfig};

use super::record::{Group, Method};

/// Solver knobs shared by every run of a plan. Rank comes from the preset
/// scale; the smoothness weight and seed vary per run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub lambda_a: f64,
    pub lambda_d: f64,
    pub max_outer: usize,
    pub max_inner_b: usize,
    pub abs_tol_loss: f64,
    pub rel_tol_loss: f64,
    pub feas_tol: f64,
    pub inner_tol: f64,
    pub balance_scales: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let c = SolverConfig::default();
        Self {
            lambda_a: c.reg.lambda_a,
            lambda_d: c.reg.lambda_d,
            max_outer: c.max_outer,
            max_inner_b: c.max_inner_b,
            abs_tol_loss: c.abs_tol_loss,
            rel_tol_loss: c.rel_tol_loss,
            feas_tol: c.feas_tol,
            inner_tol: c.inner_tol,
            balance_scales: c.balance_scales,
        }
    }
}

impl SolverSettings {
    pub fn to_config(&self, rank: usize, lambda_b: f64, seed: u64) -> SolverConfig {
        SolverConfig {
            rank,
            reg: RegularizationConfig { lambda_a: self.lambda_a, lambda_b, lambda_d: self.lambda_d, nonneg_d: true },
            max_outer: self.max_outer,
            max_inner_b: self.max_inner_b,
            abs_tol_loss: self.abs_tol_loss,
            rel_tol_loss: self.rel_tol_loss,
            feas_tol: self.feas_tol,
            inner_tol: self.inner_tol,
            seed,
            balance_scales: self.balance_scales,
        }
    }
}

/// Everything needed to regenerate the datasets and rerun every fit of one
/// experiment group. Serializes to the JSON accepted by `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub group: Group,
    pub n_datasets: usize,
    pub noise_levels: Vec<f64>,
    /// Only read by the overlap group.
    #[serde(default)]
    pub overlap_fractions: Vec<f64>,
    pub methods: Vec<Method>,
    pub lambda_b_grid: Vec<f64>,
    pub n_inits: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub scale: PresetScale,
    #[serde(default)]
    pub solver: SolverSettings,
}

pub const DEFAULT_LAMBDA_B_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

/// One dataset of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub id: String,
    pub index: usize,
    pub seed: u64,
    pub noise: f64,
    pub overlap: f64,
}

impl ExperimentPlan {
    /// Desk-scale defaults: 10 datasets × 10 initializations.
    pub fn default_for(group: Group, base_seed: u64) -> Self {
        let (noise, fractions, methods) = match group {
            Group::Easy => (vec![0.5], vec![], vec![Method::Parafac2, Method::TParafac2]),
            Group::AlmostZero => (vec![0.25], vec![], vec![Method::Parafac2, Method::TParafac2]),
            Group::Overlap => (
                vec![0.5],
                vec![0.2],
                vec![Method::Parafac2, Method::TParafac2, Method::TCmf, Method::NnTCmf],
            ),
        };
        Self {
            group,
            n_datasets: 10,
            noise_levels: noise,
            overlap_fractions: fractions,
            methods,
            lambda_b_grid: DEFAULT_LAMBDA_B_GRID.to_vec(),
            n_inits: 10,
            base_seed,
            scale: PresetScale::DESK,
            solver: SolverSettings::default(),
        }
    }

    /// Full-size setup: 150×100×20 tensors, 20 datasets × 20 initializations.
    pub fn with_paper_scale(mut self) -> Self {
        self.scale = PresetScale::PAPER;
        self.n_datasets = 20;
        self.n_inits = 20;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_inits == 0 {
            return Err(Error::InvalidConfig("n_inits must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("methods must not be empty".into()));
        }
        if self.noise_levels.is_empty() {
            return Err(Error::InvalidConfig("noise_levels must not be empty".into()));
        }
        if let Some(eta) = self.noise_levels.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return Err(Error::InvalidConfig(format!("noise level {eta} must be finite and >= 0")));
        }
        if self.methods.iter().any(Method::is_temporal) && self.lambda_b_grid.is_empty() {
            return Err(Error::InvalidConfig("temporal methods need a non-empty lambda_b_grid".into()));
        }
        if let Some(l) = self.lambda_b_grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig(format!("lambda_b {l} must be finite and >= 0")));
        }
        if self.group == Group::Overlap && self.overlap_fractions.is_empty() {
            return Err(Error::InvalidConfig("overlap group needs overlap_fractions".into()));
        }
        self.solver.to_config(self.scale.rank, 0.0, 0).validate()
    }

    /// Overlap fractions actually iterated: the configured list for the
    /// overlap group, a single zero otherwise.
    fn fractions(&self) -> Vec<f64> {
        match self.group {
            Group::Overlap => self.overlap_fractions.clone(),
            _ => vec![0.0],
        }
    }

    /// Datasets in generation order. A dataset index keeps its seed across
    /// noise levels, so the same ground truth is seen at every η.
    pub fn datasets(&self) -> Vec<DatasetSpec> {
        let mut out = Vec::new();
        for &overlap in &self.fractions() {
            for &noise in &self.noise_levels {
                for index in 0..self.n_datasets {
                    let mut id = format!("{}-eta{}", self.group.as_str(), noise);
                    if self.group == Group::Overlap {
                        id.push_str(&format!("-ov{overlap}"));
                    }
                    id.push_str(&format!("-{index:03}"));
                    out.push(DatasetSpec { id, index, seed: dataset_seed(self.base_seed, self.group, index), noise, overlap });
                }
            }
        }
        out
    }

    /// Generator configuration for one dataset of this plan.
    pub fn synthetic_config(&self, spec: &DatasetSpec) -> Result<SyntheticConfig> {
        match self.group {
            Group::Easy => Ok(easy_preset(spec.seed, self.scale, spec.noise)),
            // alternate between one and two low-strength concepts
            Group::AlmostZero => almostzero_preset(spec.seed, self.scale, spec.noise, 1 + spec.index % 2),
            Group::Overlap => overlap_preset(spec.seed, self.scale, spec.noise, spec.overlap),
        }
    }

    /// (method, λ_B) pairs run on every dataset; temporal methods expand over the grid.
    pub fn method_variants(&self) -> Vec<(Method, f64)> {
        let mut out = Vec::new();
        for &m in &self.methods {
            if m.is_temporal() {
                out.extend(self.lambda_b_grid.iter().map(|&l| (m, l)));
            } else {
                out.push((m, 0.0));
            }
        }
        out
    }

    pub fn init_seeds(&self) -> std::ops::Range<u64> {
        self.base_seed..self.base_seed + self.n_inits as u64
    }
}

fn dataset_seed(base: u64, group: Group, index: usize) -> u64 {
    let salt = match group {
        Group::Easy => 0x0e45_u64,
        Group::AlmostZero => 0x0a2e,
        Group::Overlap => 0x0ae7,
    };
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(salt << 32).wrapping_add(index as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_defaults() {
        let plan = ExperimentPlan::default_for(Group::Overlap, 3);
        let text = serde_json::to_string(&plan).unwrap();
        let back: ExperimentPlan = serde_json::from_str(&text).unwrap();
        assert_eq!(back, plan);
        let minimal = r#"{"group":"easy","n_datasets":2,"noise_levels":[0.5],"methods":["PARAFAC2"],
            "lambda_b_grid":[],"n_inits":1,"base_seed":0}"#;
        let p: ExperimentPlan = serde_json::from_str(minimal).unwrap();
        assert_eq!(p.scale, PresetScale::DESK);
        p.validate().unwrap();
        assert!(serde_json::from_str::<ExperimentPlan>(&minimal.replace("\"n_inits\"", "\"bogus\":1,\"n_inits\"")).is_err());
    }

    #[test]
    fn enumerations() {
        let mut plan = ExperimentPlan::default_for(Group::Easy, 1);
        plan.noise_levels = vec![0.25, 0.5];
        plan.n_datasets = 3;
        let ds = plan.datasets();
        assert_eq!(ds.len(), 6);
        assert_eq!(ds[0].seed, ds[3].seed);
        assert_ne!(ds[0].seed, ds[1].seed);
        assert_eq!(ds[4].id, "easy-eta0.5-001");
        assert_eq!(plan.method_variants().len(), 5);
        assert_eq!(plan.init_seeds(), 1..11);
    }

    #[test]
    fn invalid_plans() {
        let mut plan = ExperimentPlan::default_for(Group::Easy, 1);
        plan.n_inits = 0;
        assert!(plan.validate().is_err());
        let mut plan = ExperimentPlan::default_for(Group::Easy, 1);
        plan.methods.clear();
        assert!(plan.validate().is_err());
        let mut plan = ExperimentPlan::default_for(Group::Overlap, 1);
        plan.overlap_fractions.clear();
        assert!(plan.validate().is_err());
    }
}
