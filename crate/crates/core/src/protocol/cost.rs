//! Latency model for choosing between plaintext download and VarPIR.

use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    PlainDownload,
    VarPir,
}

impl Scheme {
    pub fn code(self) -> u8 {
        match self {
            Scheme::PlainDownload => 0,
            Scheme::VarPir => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Scheme::PlainDownload),
            1 => Some(Scheme::VarPir),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::PlainDownload => "plain",
            Scheme::VarPir => "varpir",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plain" => Ok(Scheme::PlainDownload),
            "varpir" => Ok(Scheme::VarPir),
            other => Err(format!("unknown scheme {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostInputs {
    /// Bits per second.
    pub bandwidth: f64,
    /// Seconds.
    pub rtt: f64,
    /// Server seconds per folded plaintext.
    pub c_fhe: f64,
    /// Server seconds for a run over every block.
    pub c_full: f64,
    pub pt_count: usize,
    pub pair_bytes: usize,
    pub query_ct_bytes: usize,
    pub answer_ct_bytes: usize,
    pub ring_degree: usize,
}

impl CostInputs {
    /// Estimated seconds to download `w` pairs.
    pub fn plain_cost(&self, w: usize) -> f64 {
        (w * self.pair_bytes * 8) as f64 / self.bandwidth + self.rtt
    }

    /// Estimated seconds for a VarPIR query over `w_pt` blocks.
    pub fn varpir_cost(&self, w_pt: usize) -> f64 {
        let cts = w_pt.div_ceil(self.ring_degree);
        let bytes = self.query_ct_bytes * cts + self.answer_ct_bytes;
        let compute = if w_pt >= self.pt_count { self.c_full } else { w_pt as f64 * self.c_fhe };
        (bytes * 8) as f64 / self.bandwidth + self.rtt + compute
    }

    /// Smallest run that is cheaper to answer as the full run.
    pub fn promote_at(&self) -> usize {
        if self.c_fhe <= 0.0 {
            return self.pt_count;
        }
        ((self.c_full / self.c_fhe).ceil() as usize).clamp(1, self.pt_count)
    }
}

/// Cheaper scheme for a range of `w` pairs spanning `w_pt` blocks; ties go
/// to plaintext download.
pub fn select_scheme(w: usize, w_pt: usize, inputs: &CostInputs) -> Scheme {
    if inputs.varpir_cost(w_pt) < inputs.plain_cost(w) {
        Scheme::VarPir
    } else {
        Scheme::PlainDownload
    }
}
