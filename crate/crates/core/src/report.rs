//! Block norms of self-energies and residuals, per-sample records and verdicts.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Samples closer than this to the real axis are refused unless overridden.
pub const MIN_IMAG: f64 = 1e-3;

/// Default tolerance for env-touching blocks.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Max-abs entries of the four blocks induced by a fragment index mask.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockNorms {
    pub frag_frag: f64,
    pub frag_env: f64,
    pub env_frag: f64,
    pub env_env: f64,
}

impl BlockNorms {
    /// `fragment[i]` marks fragment rows/columns; the matrix is square.
    pub fn of(m: &CMatrix, fragment: &[bool]) -> Self {
        let mut b = BlockNorms {
            frag_frag: 0.0,
            frag_env: 0.0,
            env_frag: 0.0,
            env_env: 0.0,
        };
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)].norm();
                let slot = match (fragment[i], fragment[j]) {
                    (true, true) => &mut b.frag_frag,
                    (true, false) => &mut b.frag_env,
                    (false, true) => &mut b.env_frag,
                    (false, false) => &mut b.env_env,
                };
                *slot = slot.max(v);
            }
        }
        b
    }

    /// Largest norm among the blocks that touch the environment.
    pub fn env_max(&self) -> f64 {
        self.frag_env.max(self.env_frag).max(self.env_env)
    }

    pub fn named(&self) -> [(&'static str, f64); 4] {
        [
            ("frag_frag", self.frag_frag),
            ("frag_env", self.frag_env),
            ("env_frag", self.env_frag),
            ("env_env", self.env_env),
        ]
    }
}

/// Fragment mask `0..p` of a `d`-dimensional single-particle space.
pub fn fragment_mask(d: usize, p: usize) -> Vec<bool> {
    (0..d).map(|i| i < p).collect()
}

/// Fragment mask of Nambu space: `0..p` and `d..d+p`.
pub fn nambu_fragment_mask(d: usize, p: usize) -> Vec<bool> {
    (0..2 * d).map(|i| i % d < p).collect()
}

/// A failure recorded against one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleError {
    pub class: String,
    pub message: String,
}

impl From<&Error> for SampleError {
    fn from(e: &Error) -> Self {
        SampleError {
            class: e.class().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub label: String,
    pub outcome: std::result::Result<BlockNorms, SampleError>,
}

/// Per-sample block norms with a verdict: pass iff every evaluated sample has
/// all env-touching blocks within tolerance. Samples that raised an error
/// (for instance at a removable singularity) are recorded but do not enter
/// the verdict; a report in which every sample failed is not constructed.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityReport {
    pub samples: Vec<SampleRecord>,
    pub tolerance: f64,
    pub pass: bool,
}

impl SparsityReport {
    pub fn from_records(samples: Vec<SampleRecord>, tolerance: f64) -> Result<Self> {
        if !samples.is_empty() && samples.iter().all(|s| s.outcome.is_err()) {
            let first = samples[0].outcome.as_ref().unwrap_err();
            return Err(Error::Argument(format!(
                "every sample failed; first failure ({}): {}",
                first.class, first.message
            )));
        }
        let pass = !samples.is_empty()
            && samples.iter().all(|s| match &s.outcome {
                Ok(b) => b.env_max() <= tolerance,
                Err(_) => true,
            });
        Ok(SparsityReport {
            samples,
            tolerance,
            pass,
        })
    }

    /// Largest env-touching norm over evaluated samples.
    pub fn max_env(&self) -> f64 {
        self.samples
            .iter()
            .filter_map(|s| s.outcome.as_ref().ok())
            .fold(0.0, |acc, b| acc.max(b.env_max()))
    }

    /// Smallest fragment-block norm over evaluated samples.
    pub fn min_fragment(&self) -> f64 {
        self.samples
            .iter()
            .filter_map(|s| s.outcome.as_ref().ok())
            .fold(f64::INFINITY, |acc, b| acc.min(b.frag_frag))
    }

    pub fn errors(&self) -> impl Iterator<Item = (&str, &SampleError)> {
        self.samples
            .iter()
            .filter_map(|s| s.outcome.as_ref().err().map(|e| (s.label.as_str(), e)))
    }

    /// Plain-text lines, one per block and sample, then the verdict.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&render_sample(s, self.tolerance));
        }
        let _ = writeln!(out, "VERDICT {}", if self.pass { "PASS" } else { "FAIL" });
        out
    }
}

/// Report lines of one sample. Fragment blocks are informational.
pub fn render_sample(s: &SampleRecord, tolerance: f64) -> String {
    let mut out = String::new();
    match &s.outcome {
        Ok(b) => {
            for (name, norm) in b.named() {
                let status = if name == "frag_frag" {
                    "INFO"
                } else if norm <= tolerance {
                    "PASS"
                } else {
                    "FAIL"
                };
                let _ = writeln!(
                    out,
                    "sample={} block={} norm={} tol={} {}",
                    s.label,
                    name,
                    sci(norm),
                    sci(tolerance),
                    status
                );
            }
        }
        Err(e) => {
            let _ = writeln!(
                out,
                "sample={} ERROR class={} {}",
                s.label, e.class, e.message
            );
        }
    }
    out
}

/// `printf("%.3e")` formatting: three decimals and an exponent of at least
/// two digits.
pub fn sci(x: f64) -> String {
    sci_digits(x, 3)
}

/// Like [`sci`] with `digits` decimals.
pub fn sci_digits(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.digits$e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let (sign, digits) = match exp.strip_prefix('-') {
        Some(d) => ('-', d),
        None => ('+', exp),
    };
    format!("{mantissa}e{sign}{digits:0>2}")
}

/// Label of a complex sample point.
pub fn complex_label(z: Complex64) -> String {
    format!("{:.6}{:+.6}i", z.re, z.im)
}

/// Evaluates `sigma` at each sample in parallel and collects block norms in
/// sample order.
pub fn sparsity_report_with<F>(
    sigma: F,
    fragment: &[bool],
    samples: &[Complex64],
    tolerance: f64,
    min_imag: f64,
) -> Result<SparsityReport>
where
    F: Fn(Complex64) -> Result<CMatrix> + Sync,
{
    if samples.is_empty() {
        return Err(Error::Argument("no sample points".into()));
    }
    if let Some(z) = samples.iter().find(|z| z.im.abs() < min_imag) {
        return Err(Error::Argument(format!(
            "sample {} lies closer than {min_imag:.1e} to the real axis",
            complex_label(*z)
        )));
    }
    let records = samples
        .par_iter()
        .map(|&z| SampleRecord {
            label: complex_label(z),
            outcome: sigma(z)
                .map(|s| BlockNorms::of(&s, fragment))
                .map_err(|e| SampleError::from(&e)),
        })
        .collect();
    SparsityReport::from_records(records, tolerance)
}
