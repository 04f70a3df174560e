use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::ExitReason;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "PARAFAC2")]
    Parafac2,
    #[serde(rename = "tPARAFAC2")]
    TParafac2,
    #[serde(rename = "tCMF")]
    TCmf,
    #[serde(rename = "NNtCMF")]
    NnTCmf,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Parafac2 => "PARAFAC2",
            Method::TParafac2 => "tPARAFAC2",
            Method::TCmf => "tCMF",
            Method::NnTCmf => "NNtCMF",
        }
    }

    pub fn is_cmf(&self) -> bool {
        matches!(self, Method::TCmf | Method::NnTCmf)
    }

    /// Whether the method takes a smoothness weight.
    pub fn is_temporal(&self) -> bool {
        !matches!(self, Method::Parafac2)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parafac2" => Ok(Method::Parafac2),
            "tparafac2" => Ok(Method::TParafac2),
            "tcmf" => Ok(Method::TCmf),
            "nntcmf" => Ok(Method::NnTCmf),
            _ => Err(Error::InvalidConfig(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Group {
    Easy,
    AlmostZero,
    Overlap,
}

impl Group {
    pub fn as_str(&self) -> &'static str {
        match self {
            Group::Easy => "easy",
            Group::AlmostZero => "almost-zero",
            Group::Overlap => "overlap",
        }
    }
}

impl std::str::FromStr for Group {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Group::Easy),
            "almostzero" | "almost-zero" => Ok(Group::AlmostZero),
            "overlap" => Ok(Group::Overlap),
            _ => Err(Error::InvalidConfig(format!("unknown group {s:?}"))),
        }
    }
}

/// Outcome of one (dataset, method, initialization) fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub group: Group,
    pub dataset_id: String,
    pub noise: f64,
    pub overlap: f64,
    pub method: Method,
    pub lambda_b: f64,
    pub init_seed: u64,
    pub final_loss: f64,
    pub outer_iters: usize,
    pub exit_reason: ExitReason,
    pub converged: bool,
    pub degenerate: bool,
    pub fms: Option<f64>,
    pub feas_gap_b_z: f64,
    pub feas_gap_b_y: f64,
    pub feas_gap_d: f64,
    pub wall_time_seconds: f64,
}

impl RunRecord {
    /// Legend-style label, e.g. `tPARAFAC2(10)`.
    pub fn label(&self) -> String {
        if self.method.is_temporal() {
            format!("{}({})", self.method, self.lambda_b)
        } else {
            self.method.to_string()
        }
    }
}
