//! Closed-form per-epoch bandwidth of in-network, federated and split
//! learning.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GBIT: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthParams {
    /// Data points in the whole dataset.
    pub q: f64,
    /// Width of the fusion layer input.
    pub p: f64,
    /// Bits per activation or parameter.
    pub s_bits: f64,
    /// Number of clients.
    pub clients: f64,
    /// Parameter count of the reference model.
    pub n_params: f64,
    /// Fraction of the model held client-side in split learning.
    pub eta_frac: f64,
}

impl BandwidthParams {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.q, self.p, self.s_bits, self.clients, self.n_params, self.eta_frac];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("bandwidth parameters must be finite and non-negative".into()));
        }
        if self.p == 0.0 || self.s_bits == 0.0 || self.clients == 0.0 || self.n_params == 0.0 {
            return Err(Error::InvalidArgument("p, s, J and N must be positive".into()));
        }
        if self.eta_frac > 1.0 {
            return Err(Error::InvalidArgument(format!("eta_frac must lie in [0, 1], got {}", self.eta_frac)));
        }
        Ok(())
    }
}

/// `2pqs / J`
pub fn inl_bits(b: &BandwidthParams) -> f64 {
    2.0 * b.p * b.q * b.s_bits / b.clients
}

/// `2NJs`
pub fn fl_bits(b: &BandwidthParams) -> f64 {
    2.0 * b.n_params * b.clients * b.s_bits
}

/// `(2pq + ηNJ)s`
pub fn sl_bits(b: &BandwidthParams) -> f64 {
    (2.0 * b.p * b.q + b.eta_frac * b.n_params * b.clients) * b.s_bits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Fl,
    Sl,
    Inl,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Fl => "fl",
            Scheme::Sl => "sl",
            Scheme::Inl => "inl",
        }
    }

    pub fn bits(self, b: &BandwidthParams) -> f64 {
        match self {
            Scheme::Fl => fl_bits(b),
            Scheme::Sl => sl_bits(b),
            Scheme::Inl => inl_bits(b),
        }
    }
}

/// One cell of the reference comparison together with our value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell {
    pub model: &'static str,
    pub q: u64,
    pub scheme: Scheme,
    pub gbits: f64,
    /// The reference value as displayed, with its precision.
    pub reference: &'static str,
    pub matched: bool,
}

pub const VGG16_PARAMS: f64 = 138_344_128.0;
pub const RESNET50_PARAMS: f64 = 25_636_712.0;

/// `(model, N, η, q, [fl, sl, inl])` reference values as displayed.
const REFERENCE: [(&str, f64, f64, u64, [&str; 3]); 4] = [
    ("VGG16", VGG16_PARAMS, 0.11, 50_000, ["4427", "324", "0.16"]),
    ("ResNet50", RESNET50_PARAMS, 0.88, 50_000, ["820", "441", "0.16"]),
    ("VGG16", VGG16_PARAMS, 0.11, 500_000, ["4427", "1046", "1.6"]),
    ("ResNet50", RESNET50_PARAMS, 0.88, 500_000, ["820", "1164", "1.6"]),
];

pub fn reference_params(n_params: f64, eta_frac: f64, q: f64) -> BandwidthParams {
    BandwidthParams { q, p: 25_088.0, s_bits: 32.0, clients: 500.0, n_params, eta_frac }
}

/// Does `value` round to the displayed string (±0.5 in the last shown digit)?
pub fn matches_display(value: f64, shown: &str) -> bool {
    let decimals = shown.split_once('.').map_or(0, |(_, frac)| frac.len());
    let Ok(target) = shown.parse::<f64>() else {
        return false;
    };
    let half_ulp = 0.5 * 10f64.powi(-(decimals as i32));
    (value - target).abs() <= half_ulp
}

pub fn table1() -> Vec<TableCell> {
    let mut cells = Vec::with_capacity(12);
    for (model, n, eta, q, shown) in REFERENCE {
        let params = reference_params(n, eta, q as f64);
        for (scheme, reference) in [Scheme::Fl, Scheme::Sl, Scheme::Inl].into_iter().zip(shown) {
            let gbits = scheme.bits(&params) / GBIT;
            cells.push(TableCell { model, q, scheme, gbits, reference, matched: matches_display(gbits, reference) });
        }
    }
    cells
}

pub fn table1_csv(cells: &[TableCell]) -> String {
    let mut out = String::from("model,q,scheme,gbits,reference,matched\n");
    for c in cells {
        writeln!(out, "{},{},{},{:.4},{},{}", c.model, c.q, c.scheme.as_str(), c.gbits, c.reference, c.matched)
            .expect("writing to a String");
    }
    out
}

/// Aligned text rendering: one row per (model, q), columns FL / SL / INL.
pub fn table1_text(cells: &[TableCell]) -> String {
    let mut out = format!("{:<10} {:>8} {:>14} {:>14} {:>14}\n", "model", "q", "FL [Gbit]", "SL [Gbit]", "INL [Gbit]");
    for row in cells.chunks(3) {
        let c = &row[0];
        write!(out, "{:<10} {:>8}", c.model, c.q).expect("writing to a String");
        for cell in row {
            write!(out, " {:>14.4}", cell.gbits).expect("writing to a String");
        }
        out.push('\n');
    }
    out
}
