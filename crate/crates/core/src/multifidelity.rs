//! Additive multi-fidelity correction of a polynomial chaos expansion.
//!
//! A low-fidelity expansion over the degree-`N` total-degree set is corrected
//! by a degree-`N_C` expansion of the residual `f_H - f_M`, fitted by weighted
//! least squares on a handful of high-fidelity evaluations. Corrections
//! accumulate: each refinement fits the residual against the *current*
//! multi-fidelity expansion, never the original low-fidelity one.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::forward::{evaluate_batch, BatchError, ForwardModel, ModelError};
use crate::pce::io::{read_header, read_table, write_header, write_table, RecordHeader};
use crate::pce::{fit_weighted_lsq, MultiIndexSet, PCSurrogate, PceError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiFidelityError {
    #[error("correction degree {correction} exceeds surrogate degree {degree}")]
    CorrectionDegree { correction: usize, degree: usize },
    #[error("correction index set is not contained in the surrogate index set")]
    IndexSetMismatch,
    #[error("correction has {got} outputs, surrogate has {expected}")]
    OutputMismatch { expected: usize, got: usize },
    #[error("high-fidelity model dimensions ({input}, {output}) do not match the surrogate ({dim}, {outputs})")]
    ModelShape { input: usize, output: usize, dim: usize, outputs: usize },
    #[error("high-fidelity evaluation failed: {0}")]
    HighFidelity(#[from] BatchError),
    #[error(transparent)]
    Fit(#[from] PceError),
}

/// Where and how one correction was fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct ProvenanceEvent {
    pub degree: usize,
    pub samples: usize,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
}

/// Correction coefficients u^C over a total-degree set of degree `N_C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub set: MultiIndexSet,
    pub coeffs: DMatrix<f64>,
    pub residual_norms: Vec<f64>,
}

/// Low-fidelity expansion plus accumulated additive corrections.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiFidelitySurrogate {
    base: PCSurrogate,
    /// Accumulated u^C, rows indexed by the first `rows` terms of the base set.
    correction: DMatrix<f64>,
    correction_degree: usize,
    merged: PCSurrogate,
    provenance: Vec<ProvenanceEvent>,
}

impl MultiFidelitySurrogate {
    /// f_M := f_L with no corrections.
    pub fn from_base(base: PCSurrogate) -> Self {
        let correction = DMatrix::zeros(1, base.outputs());
        Self { merged: base.clone(), base, correction, correction_degree: 0, provenance: Vec::new() }
    }

    pub fn base(&self) -> &PCSurrogate {
        &self.base
    }

    /// The merged expansion sum (u^L + u^C) Psi used for evaluation.
    pub fn merged(&self) -> &PCSurrogate {
        &self.merged
    }

    pub fn accumulated_correction(&self) -> &DMatrix<f64> {
        &self.correction
    }

    pub fn correction_degree(&self) -> usize {
        self.correction_degree
    }

    pub fn provenance(&self) -> &[ProvenanceEvent] {
        &self.provenance
    }

    pub fn refinements(&self) -> usize {
        self.provenance.len()
    }

    pub fn eval(&self, theta: &[f64]) -> Result<Vec<f64>, PceError> {
        self.merged.eval(theta)
    }
}

impl ForwardModel for MultiFidelitySurrogate {
    fn input_dim(&self) -> usize {
        self.merged.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.merged.output_dim()
    }
    fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.merged.evaluate(theta)
    }
}

/// Default sample count for a degree-`degree` correction: `oversampling * C(degree + d, d)`.
pub fn correction_sample_count(dim: usize, degree: usize, oversampling: usize) -> Result<usize, PceError> {
    Ok(oversampling * MultiIndexSet::cardinality(dim, degree)?)
}

/// Fits u^C to f_H(theta_i) - f_M(theta_i) with Christoffel-weighted least
/// squares over the degree-`degree` set in the surrogate's basis.
pub fn fit_correction<H: ForwardModel + ?Sized>(
    current: &MultiFidelitySurrogate,
    high: &H,
    points: &[Vec<f64>],
    degree: usize,
) -> Result<Correction, MultiFidelityError> {
    let base = current.base();
    if degree > base.index_set().degree() {
        return Err(MultiFidelityError::CorrectionDegree { correction: degree, degree: base.index_set().degree() });
    }
    if high.input_dim() != base.dim() || high.output_dim() != base.outputs() {
        return Err(MultiFidelityError::ModelShape {
            input: high.input_dim(),
            output: high.output_dim(),
            dim: base.dim(),
            outputs: base.outputs(),
        });
    }
    let set = MultiIndexSet::total_degree(base.dim(), degree)?;
    if points.len() < set.len() {
        return Err(PceError::Undersampled { samples: points.len(), terms: set.len() }.into());
    }
    let hi = evaluate_batch(high, points)?;
    let lo = current.merged().eval_many(points)?;
    let m = base.outputs();
    let residuals = DMatrix::from_fn(points.len(), m, |i, k| hi[i][k] - lo[i][k]);
    let (fit, report) = fit_weighted_lsq(points, &residuals, base.basis(), &set)?;
    Ok(Correction { set, coeffs: fit.coeffs().clone(), residual_norms: report.residual_norms })
}

/// Adds `correction` index-wise onto the leading block of the expansion.
/// Coefficients outside the correction set are left untouched.
pub fn combine(
    current: &MultiFidelitySurrogate,
    correction: &Correction,
    event: ProvenanceEvent,
) -> Result<MultiFidelitySurrogate, MultiFidelityError> {
    let base_set = current.base.index_set();
    if !correction.set.is_prefix_of(base_set) {
        return Err(MultiFidelityError::IndexSetMismatch);
    }
    if correction.coeffs.ncols() != current.base.outputs() {
        return Err(MultiFidelityError::OutputMismatch { expected: current.base.outputs(), got: correction.coeffs.ncols() });
    }
    if correction.coeffs.nrows() != correction.set.len() {
        return Err(MultiFidelityError::IndexSetMismatch);
    }
    let rows = current.correction.nrows().max(correction.coeffs.nrows());
    let mut acc = DMatrix::zeros(rows, current.base.outputs());
    acc.rows_mut(0, current.correction.nrows()).copy_from(&current.correction);
    {
        let mut head = acc.rows_mut(0, correction.coeffs.nrows());
        head += &correction.coeffs;
    }
    let mut merged = current.base.coeffs().clone();
    {
        let mut head = merged.rows_mut(0, rows);
        head += &acc;
    }
    let merged = PCSurrogate::new(current.base.basis().clone(), base_set.clone(), merged)?;
    let mut provenance = current.provenance.clone();
    provenance.push(event);
    Ok(MultiFidelitySurrogate {
        base: current.base.clone(),
        correction: acc,
        correction_degree: current.correction_degree.max(correction.set.degree()),
        merged,
        provenance,
    })
}

/// Outcome of one refinement: the new surrogate and the number of
/// high-fidelity evaluations spent on it.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub surrogate: MultiFidelitySurrogate,
    pub correction: Correction,
    pub evaluations: usize,
}

/// Fits and merges one correction against `current` using `points`.
pub fn refine<H: ForwardModel + ?Sized>(
    current: &MultiFidelitySurrogate,
    high: &H,
    points: &[Vec<f64>],
    degree: usize,
    center: Option<Vec<f64>>,
    radius: Option<f64>,
) -> Result<Refinement, MultiFidelityError> {
    let correction = fit_correction(current, high, points, degree)?;
    let event = ProvenanceEvent { degree, samples: points.len(), center, radius };
    let surrogate = combine(current, &correction, event)?;
    Ok(Refinement { surrogate, correction, evaluations: points.len() })
}

/// Wraps `low`, draws `2 * C(N_C + d, d)` points from `sampler` and applies one
/// correction.
pub fn build_multifidelity<H, S>(
    low: PCSurrogate,
    high: &H,
    degree: usize,
    sampler: S,
) -> Result<Refinement, MultiFidelityError>
where
    H: ForwardModel + ?Sized,
    S: FnOnce(usize) -> Vec<Vec<f64>>,
{
    let q = correction_sample_count(low.dim(), degree, 2)?;
    let points = sampler(q);
    refine(&MultiFidelitySurrogate::from_base(low), high, &points, degree, None, None)
}

fn format_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

/// Writes the pce record with tables `base` and `correction` plus a
/// provenance block.
pub fn write_multifidelity<W: Write>(w: &mut W, s: &MultiFidelitySurrogate) -> Result<(), PceError> {
    let mut extra = vec![
        format!("correction-degree {}", s.correction_degree),
        format!("refinements {}", s.provenance.len()),
    ];
    for (i, e) in s.provenance.iter().enumerate() {
        let mut line = format!("event {i} degree {} samples {}", e.degree, e.samples);
        if let Some(r) = e.radius {
            line.push_str(&format!(" radius {r:e}"));
        }
        if let Some(c) = &e.center {
            line.push_str(&format!(" center {}", format_list(c)));
        }
        extra.push(line);
    }
    let header = RecordHeader {
        kind: "multifidelity".into(),
        basis: s.base.basis().clone(),
        set: s.base.index_set().clone(),
        outputs: s.base.outputs(),
        tables: vec![("base".into(), s.base.index_set().len()), ("correction".into(), s.correction.nrows())],
        extra,
    };
    write_header(w, &header)?;
    write_table(w, s.base.coeffs())?;
    write_table(w, &s.correction)
}

fn parse_event(line: &str) -> Result<ProvenanceEvent, PceError> {
    let bad = || PceError::Format(format!("bad provenance line: {line}"));
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let mut ev = ProvenanceEvent { degree: 0, samples: 0, center: None, radius: None };
    let mut i = 2;
    while i < tokens.len() {
        match tokens[i] {
            "degree" => ev.degree = tokens.get(i + 1).and_then(|t| t.parse().ok()).ok_or_else(bad)?,
            "samples" => ev.samples = tokens.get(i + 1).and_then(|t| t.parse().ok()).ok_or_else(bad)?,
            "radius" => ev.radius = Some(tokens.get(i + 1).and_then(|t| t.parse().ok()).ok_or_else(bad)?),
            "center" => {
                let c = tokens[i + 1..].iter().map(|t| t.parse().map_err(|_| bad())).collect::<Result<Vec<f64>, _>>()?;
                ev.center = Some(c);
                break;
            }
            _ => return Err(bad()),
        }
        i += 2;
    }
    Ok(ev)
}

pub fn read_multifidelity<R: BufRead>(r: &mut R) -> Result<MultiFidelitySurrogate, PceError> {
    let h = read_header(r)?;
    if h.kind != "multifidelity" || h.tables.len() != 2 {
        return Err(PceError::Format("not a multi-fidelity record".into()));
    }
    let base_coeffs = read_table(r, h.tables[0].1, h.outputs)?;
    let correction = read_table(r, h.tables[1].1, h.outputs)?;
    let mut correction_degree = 0;
    let mut provenance = Vec::new();
    for line in &h.extra {
        if let Some(v) = line.strip_prefix("correction-degree ") {
            correction_degree = v.trim().parse().map_err(|_| PceError::Format(line.clone()))?;
        } else if line.starts_with("event ") {
            provenance.push(parse_event(line)?);
        }
    }
    if correction.nrows() > h.set.len() {
        return Err(PceError::Format("correction table larger than the index set".into()));
    }
    let base = PCSurrogate::new(h.basis.clone(), h.set.clone(), base_coeffs)?;
    let mut merged = base.coeffs().clone();
    {
        let mut head = merged.rows_mut(0, correction.nrows());
        head += &correction;
    }
    let merged = PCSurrogate::new(h.basis, h.set, merged)?;
    Ok(MultiFidelitySurrogate { base, correction, correction_degree, merged, provenance })
}
