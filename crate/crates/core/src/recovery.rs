//! Greedy sparse recovery: subspace pursuit, orthogonal matching pursuit and
//! least squares on a fixed support.
//!
//! Both greedy solvers run against a [`LeastSquares`] problem, which knows
//! `A^H y` and can fit any support. [`DenseProblem`] works from `A` and `y`
//! through Householder QR; [`GramProblem`] works from `A^H A`, `A^H y` and
//! `‖y‖²` alone, which makes repeated recoveries against one matrix cheap.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::adjoint_apply;
use crate::io::{fmt_f64, write_csv, Provenance};

/// Columns whose QR diagonal falls below this fraction of the largest are
/// treated as dependent (condition number above `1e12`).
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Cholesky pivots of the Gram matrix are square roots of squared column
/// norms, so the same relative test loses half the digits.
pub const GRAM_RANK_TOLERANCE: f64 = 1e-7;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Indices of the `s` largest scores, ties to the lowest index, sorted.
pub fn top_s_indices(scores: &[f64], s: usize) -> Result<Vec<usize>> {
    if s > scores.len() {
        return Err(Error::Sparsity {
            sparsity: s,
            columns: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut picked = order[..s].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// The `s` columns of `a` best correlated with `r`: top-`s` of `|A^H r|`.
pub fn select_top_s(a: &Array2<Complex64>, r: ArrayView1<'_, Complex64>, s: usize) -> Result<Vec<usize>> {
    check_rows(a, r.len())?;
    let corr = adjoint_apply(a, r);
    top_s_indices(&corr.mapv(|z| z.norm()).to_vec(), s)
}

fn check_rows(a: &Array2<Complex64>, len: usize) -> Result<()> {
    if a.nrows() != len {
        return Err(Error::Dimension(format!("matrix has {} rows, vector has {len}", a.nrows())));
    }
    Ok(())
}

fn check_support(support: &[usize], cols: usize) -> Result<()> {
    if let Some(&n) = support.iter().find(|&&n| n >= cols) {
        return Err(Error::IndexOutOfRange {
            what: "support index",
            index: n,
            len: cols,
        });
    }
    Ok(())
}

/// Householder QR of a tall complex matrix, applied to one right-hand side.
struct Qr {
    r: Array2<Complex64>,
    qty: Vec<Complex64>,
}

impl Qr {
    fn factor(mut m: Array2<Complex64>, mut b: Vec<Complex64>) -> Qr {
        let (rows, cols) = m.dim();
        for k in 0..cols.min(rows) {
            let norm = (k..rows).map(|i| m[[i, k]].norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let x0 = m[[k, k]];
            let phase = if x0.norm() == 0.0 { Complex64::new(1.0, 0.0) } else { x0 / x0.norm() };
            let alpha = -phase * norm;
            let mut v: Vec<Complex64> = (k..rows).map(|i| m[[i, k]]).collect();
            v[0] -= alpha;
            let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if vnorm == 0.0 {
                continue;
            }
            v.iter_mut().for_each(|z| *z /= vnorm);
            for c in k..cols {
                let dot: Complex64 = v.iter().enumerate().map(|(o, vi)| vi.conj() * m[[k + o, c]]).sum();
                for (o, vi) in v.iter().enumerate() {
                    m[[k + o, c]] -= *vi * dot * 2.0;
                }
            }
            let dot: Complex64 = v.iter().enumerate().map(|(o, vi)| vi.conj() * b[k + o]).sum();
            for (o, vi) in v.iter().enumerate() {
                b[k + o] -= *vi * dot * 2.0;
            }
        }
        Qr { r: m, qty: b }
    }

    fn check_rank(&self, support: &[usize]) -> Result<()> {
        let diag: Vec<f64> = (0..support.len()).map(|k| self.r[[k, k]].norm()).collect();
        rank_check(&diag, support, RANK_TOLERANCE)
    }

    fn solve(&self, s: usize) -> Vec<Complex64> {
        let mut c = vec![ZERO; s];
        for k in (0..s).rev() {
            let mut acc = self.qty[k];
            for j in k + 1..s {
                acc -= self.r[[k, j]] * c[j];
            }
            c[k] = acc / self.r[[k, k]];
        }
        c
    }
}

fn rank_check(diag: &[f64], support: &[usize], tol: f64) -> Result<()> {
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let dependent: Vec<usize> = diag
        .iter()
        .zip(support)
        .filter(|(&d, _)| !(d > tol * max))
        .map(|(_, &n)| n)
        .collect();
    if !dependent.is_empty() {
        return Err(Error::RankDeficient {
            columns: dependent,
            condition: if min > 0.0 { max / min } else { f64::INFINITY },
        });
    }
    Ok(())
}

fn gather_columns(a: &Array2<Complex64>, support: &[usize]) -> Array2<Complex64> {
    Array2::from_shape_fn((a.nrows(), support.len()), |(i, r)| a[[i, support[r]]])
}

/// Lower Cholesky factor of `G[u, u]`, with the Gram rank test.
pub(crate) fn gram_cholesky(gram: ArrayView2<'_, Complex64>, support: &[usize]) -> Result<Array2<Complex64>> {
    check_support(support, gram.ncols())?;
    let s = support.len();
    let mut l = Array2::<Complex64>::zeros((s, s));
    let mut diag = vec![0.0; s];
    let scale = support.iter().map(|&n| gram[[n, n]].re.max(0.0).sqrt()).fold(0.0, f64::max);
    for j in 0..s {
        let mut d = gram[[support[j], support[j]]].re;
        for k in 0..j {
            d -= l[[j, k]].norm_sqr();
        }
        let ljj = d.max(0.0).sqrt();
        diag[j] = ljj;
        if !(ljj > GRAM_RANK_TOLERANCE * scale) {
            rank_check(&diag[..=j], &support[..=j], GRAM_RANK_TOLERANCE)?;
        }
        l[[j, j]] = Complex64::new(ljj, 0.0);
        for i in j + 1..s {
            let mut acc = gram[[support[i], support[j]]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = acc / ljj;
        }
    }
    rank_check(&diag, support, GRAM_RANK_TOLERANCE)?;
    Ok(l)
}

/// Upper-triangular `R` of `A_u = QR`, with the QR rank test.
pub(crate) fn support_r_factor(a: &Array2<Complex64>, support: &[usize]) -> Result<Array2<Complex64>> {
    check_support(support, a.ncols())?;
    if support.len() > a.nrows() {
        return Err(Error::RankDeficient {
            columns: support[a.nrows()..].to_vec(),
            condition: f64::INFINITY,
        });
    }
    let s = support.len();
    let qr = Qr::factor(gather_columns(a, support), vec![ZERO; a.nrows()]);
    qr.check_rank(support)?;
    Ok(qr.r.slice(ndarray::s![..s, ..s]).to_owned())
}

/// `argmin_c ‖y − A_u c‖₂` by Householder QR.
pub fn ls_on_support(y: ArrayView1<'_, Complex64>, a: &Array2<Complex64>, support: &[usize]) -> Result<Vec<Complex64>> {
    check_rows(a, y.len())?;
    check_support(support, a.ncols())?;
    if support.len() > a.nrows() {
        return Err(Error::RankDeficient {
            columns: support[a.nrows()..].to_vec(),
            condition: f64::INFINITY,
        });
    }
    let qr = Qr::factor(gather_columns(a, support), y.to_vec());
    qr.check_rank(support)?;
    Ok(qr.solve(support.len()))
}

/// `y − A_u · ls_on_support(y, A, u)`.
pub fn residual(y: ArrayView1<'_, Complex64>, a: &Array2<Complex64>, support: &[usize]) -> Result<Array1<Complex64>> {
    let c = ls_on_support(y, a, support)?;
    Ok(residual_with(y, a, support, &c))
}

fn residual_with(y: ArrayView1<'_, Complex64>, a: &Array2<Complex64>, support: &[usize], c: &[Complex64]) -> Array1<Complex64> {
    let mut r = y.to_owned();
    for (&n, &cn) in support.iter().zip(c) {
        r.scaled_add(-cn, &a.column(n));
    }
    r
}

/// Least-squares fit on one support.
#[derive(Debug, Clone)]
pub struct LsFit {
    pub coefficients: Vec<Complex64>,
    pub residual_energy: f64,
    /// `A^H (y − A_u c)` over all columns.
    pub residual_correlation: Array1<Complex64>,
}

/// A recovery problem: fixed `A` and `y`, seen through `A^H y` and support fits.
pub trait LeastSquares {
    fn columns(&self) -> usize;
    /// `A^H y`.
    fn correlation(&self) -> &Array1<Complex64>;
    /// `‖y‖²`.
    fn energy(&self) -> f64;
    fn fit(&self, support: &[usize]) -> Result<LsFit>;
    /// Coefficients only; backends may skip the residual work.
    fn coefficients(&self, support: &[usize]) -> Result<Vec<Complex64>> {
        Ok(self.fit(support)?.coefficients)
    }
}

/// Works directly from `A` and `y`.
pub struct DenseProblem<'a> {
    a: &'a Array2<Complex64>,
    y: ArrayView1<'a, Complex64>,
    corr: Array1<Complex64>,
    energy: f64,
}

impl<'a> DenseProblem<'a> {
    pub fn new(a: &'a Array2<Complex64>, y: ArrayView1<'a, Complex64>) -> Result<Self> {
        check_rows(a, y.len())?;
        Ok(DenseProblem {
            a,
            y,
            corr: adjoint_apply(a, y),
            energy: y.iter().map(|z| z.norm_sqr()).sum(),
        })
    }
}

impl LeastSquares for DenseProblem<'_> {
    fn columns(&self) -> usize {
        self.a.ncols()
    }

    fn correlation(&self) -> &Array1<Complex64> {
        &self.corr
    }

    fn energy(&self) -> f64 {
        self.energy
    }

    fn fit(&self, support: &[usize]) -> Result<LsFit> {
        let c = ls_on_support(self.y, self.a, support)?;
        let r = residual_with(self.y, self.a, support, &c);
        Ok(LsFit {
            residual_energy: r.iter().map(|z| z.norm_sqr()).sum(),
            residual_correlation: adjoint_apply(self.a, r.view()),
            coefficients: c,
        })
    }

    fn coefficients(&self, support: &[usize]) -> Result<Vec<Complex64>> {
        ls_on_support(self.y, self.a, support)
    }
}

/// Works from the Gram matrix `A^H A`, `b = A^H y` and `‖y‖²`, solving the
/// normal equations by Cholesky. The residual energy is `‖y‖² − Re(b_u^H c)`.
pub struct GramProblem<'a> {
    gram: ArrayView2<'a, Complex64>,
    corr: Array1<Complex64>,
    energy: f64,
}

impl<'a> GramProblem<'a> {
    pub fn new(gram: ArrayView2<'a, Complex64>, correlation: Array1<Complex64>, energy: f64) -> Result<Self> {
        if gram.nrows() != gram.ncols() || gram.nrows() != correlation.len() {
            return Err(Error::Dimension(format!(
                "gram {}x{} with correlation of length {}",
                gram.nrows(),
                gram.ncols(),
                correlation.len()
            )));
        }
        Ok(GramProblem {
            gram,
            corr: correlation,
            energy,
        })
    }

    fn solve(&self, support: &[usize]) -> Result<Vec<Complex64>> {
        let l = gram_cholesky(self.gram, support)?;
        let s = support.len();
        let mut z = vec![ZERO; s];
        for i in 0..s {
            let mut acc = self.corr[support[i]];
            for k in 0..i {
                acc -= l[[i, k]] * z[k];
            }
            z[i] = acc / l[[i, i]];
        }
        let mut c = vec![ZERO; s];
        for i in (0..s).rev() {
            let mut acc = z[i];
            for k in i + 1..s {
                acc -= l[[k, i]].conj() * c[k];
            }
            c[i] = acc / l[[i, i]];
        }
        Ok(c)
    }
}

impl LeastSquares for GramProblem<'_> {
    fn columns(&self) -> usize {
        self.gram.ncols()
    }

    fn correlation(&self) -> &Array1<Complex64> {
        &self.corr
    }

    fn energy(&self) -> f64 {
        self.energy
    }

    fn fit(&self, support: &[usize]) -> Result<LsFit> {
        let c = self.solve(support)?;
        let explained: f64 = support.iter().zip(&c).map(|(&n, cn)| (self.corr[n].conj() * cn).re).sum();
        let mut rc = self.corr.clone();
        for (&n, &cn) in support.iter().zip(&c) {
            rc.scaled_add(-cn, &self.gram.column(n));
        }
        Ok(LsFit {
            residual_energy: (self.energy - explained).max(0.0),
            residual_correlation: rc,
            coefficients: c,
        })
    }

    fn coefficients(&self, support: &[usize]) -> Result<Vec<Complex64>> {
        self.solve(support)
    }
}

/// How subspace pursuit prunes the merged `2S` candidate set back to `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RefineRule {
    /// Keep the `S` largest least-squares coefficients on the merged set.
    #[default]
    Projection,
    /// Keep the `S` merged indices with the largest `|A^H y|`.
    MatchedFilter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ResidualBelowEpsilon,
    SupportStable,
    ResidualIncreased,
    /// OMP only: `S` columns chosen.
    SparsityReached,
    MaxIter,
    /// A support fit failed mid-run; the best earlier iterate is reported.
    RankFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOptions {
    pub sparsity: usize,
    pub epsilon: f64,
    pub max_iter: usize,
    pub refine: RefineRule,
}

impl RecoveryOptions {
    pub fn new(sparsity: usize, epsilon: f64) -> Self {
        RecoveryOptions {
            sparsity,
            epsilon,
            max_iter: 50,
            refine: RefineRule::Projection,
        }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_refine(mut self, refine: RefineRule) -> Self {
        self.refine = refine;
        self
    }

    fn validate(&self, columns: usize) -> Result<()> {
        if self.sparsity == 0 {
            return Err(Error::config("recovery.sparsity", "must be at least 1"));
        }
        if self.sparsity > columns {
            return Err(Error::Sparsity {
                sparsity: self.sparsity,
                columns,
            });
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::config("recovery.epsilon", "must be non-negative"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("recovery.max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

/// Residual threshold sitting three standard deviations below the noise
/// energy expected on the true support, `(L − S − 3√L) σ²`, floored at zero.
/// Early exit then only fires once the residual is noise-like.
pub fn default_epsilon(measurements: usize, sparsity: usize, noise_variance: f64) -> f64 {
    let l = measurements as f64;
    (l - sparsity as f64 - 3.0 * l.sqrt()).max(0.0) * noise_variance
}

/// Complex coefficients on a sorted support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexEstimate {
    pub len: usize,
    pub support: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl ComplexEstimate {
    pub fn dense(&self) -> Vec<Complex64> {
        let mut d = vec![ZERO; self.len];
        for (&n, &v) in self.support.iter().zip(&self.values) {
            d[n] = v;
        }
        d
    }

    /// The reported image: real parts.
    pub fn dense_real(&self) -> Vec<f64> {
        self.dense().into_iter().map(|z| z.re).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub estimate: ComplexEstimate,
    pub support_history: Vec<Vec<usize>>,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub degraded: bool,
}

impl RecoveryResult {
    pub fn support(&self) -> &[usize] {
        &self.estimate.support
    }

    pub fn residual_energy(&self) -> f64 {
        *self.residual_history.last().expect("at least one iterate")
    }

    pub const CSV_COLUMNS: [&'static str; 6] = [
        "voxel_index",
        "true_value",
        "estimated_re",
        "estimated_im",
        "in_true_support",
        "in_estimated_support",
    ];

    /// Per-voxel comparison against a dense ground truth.
    pub fn export_csv(&self, truth: &[f64], path: &Path, provenance: &Provenance) -> Result<PathBuf> {
        if truth.len() != self.estimate.len {
            return Err(Error::Dimension("truth length differs from estimate".into()));
        }
        let est = self.estimate.dense();
        let support: BTreeSet<usize> = self.estimate.support.iter().copied().collect();
        let mut prov = provenance.clone();
        prov.push("iterations", self.iterations);
        prov.push("termination", format!("{:?}", self.termination));
        let rows = truth.iter().zip(&est).enumerate().map(|(n, (&t, e))| {
            vec![
                n.to_string(),
                fmt_f64(t),
                fmt_f64(e.re),
                fmt_f64(e.im),
                u8::from(t != 0.0).to_string(),
                u8::from(support.contains(&n)).to_string(),
            ]
        });
        write_csv(path, &prov, &Self::CSV_COLUMNS, rows)
    }
}

fn magnitudes(v: &Array1<Complex64>) -> Vec<f64> {
    v.iter().map(|z| z.norm()).collect()
}

fn finish(
    columns: usize,
    support: Vec<usize>,
    values: Vec<Complex64>,
    support_history: Vec<Vec<usize>>,
    residual_history: Vec<f64>,
    termination: Termination,
) -> RecoveryResult {
    RecoveryResult {
        estimate: ComplexEstimate {
            len: columns,
            support,
            values,
        },
        iterations: support_history.len() - 1,
        support_history,
        residual_history,
        degraded: termination == Termination::RankFailure,
        termination,
    }
}

/// Subspace pursuit.
///
/// Starts from the `S` columns best matched to `y`, then repeatedly merges in
/// the `S` columns best matched to the residual, prunes back to `S` with the
/// configured [`RefineRule`] and refits. Stops when the residual energy is at
/// most `ε`, the support repeats, the residual grows (the previous support is
/// kept) or `max_iter` is reached. A failing fit after the first iterate ends
/// the run with the last good iterate flagged as degraded.
pub fn sp_recover<P: LeastSquares + ?Sized>(problem: &P, options: &RecoveryOptions) -> Result<RecoveryResult> {
    let n = problem.columns();
    options.validate(n)?;
    let s = options.sparsity;
    let y_corr = magnitudes(problem.correlation());

    let mut support = top_s_indices(&y_corr, s)?;
    let mut fit = problem.fit(&support)?;
    let mut supports = vec![support.clone()];
    let mut energies = vec![fit.residual_energy];

    let mut termination = Termination::MaxIter;
    for _ in 0..options.max_iter {
        if fit.residual_energy <= options.epsilon {
            termination = Termination::ResidualBelowEpsilon;
            break;
        }
        let extra = top_s_indices(&magnitudes(&fit.residual_correlation), s)?;
        let merged: Vec<usize> = support.iter().chain(&extra).copied().collect::<BTreeSet<_>>().into_iter().collect();
        let candidate = match options.refine {
            RefineRule::Projection => match problem.coefficients(&merged) {
                Ok(c) => {
                    let keep = top_s_indices(&c.iter().map(|z| z.norm()).collect::<Vec<_>>(), s)?;
                    keep.into_iter().map(|r| merged[r]).collect()
                }
                Err(Error::RankDeficient { .. }) => {
                    termination = Termination::RankFailure;
                    break;
                }
                Err(e) => return Err(e),
            },
            RefineRule::MatchedFilter => {
                let scores: Vec<f64> = merged.iter().map(|&m| y_corr[m]).collect();
                top_s_indices(&scores, s)?.into_iter().map(|r| merged[r]).collect::<Vec<_>>()
            }
        };
        if candidate == support {
            termination = Termination::SupportStable;
            break;
        }
        let next = match problem.fit(&candidate) {
            Ok(f) => f,
            Err(Error::RankDeficient { .. }) => {
                termination = Termination::RankFailure;
                break;
            }
            Err(e) => return Err(e),
        };
        if next.residual_energy > fit.residual_energy {
            termination = Termination::ResidualIncreased;
            break;
        }
        support = candidate;
        fit = next;
        supports.push(support.clone());
        energies.push(fit.residual_energy);
    }
    Ok(finish(n, support, fit.coefficients, supports, energies, termination))
}

/// Orthogonal matching pursuit: one column per iteration, refitting each
/// time, until `S` columns are chosen or the residual energy is at most `ε`.
/// The support history records the growing support.
pub fn omp_recover<P: LeastSquares + ?Sized>(problem: &P, options: &RecoveryOptions) -> Result<RecoveryResult> {
    let n = problem.columns();
    options.validate(n)?;
    let mut support: Vec<usize> = Vec::new();
    let mut coefficients = Vec::new();
    let mut corr = problem.correlation().clone();
    let mut energy = problem.energy();
    let mut supports = vec![Vec::new()];
    let mut energies = vec![energy];
    let mut termination = Termination::MaxIter;
    let steps = options.sparsity.min(options.max_iter);
    for _ in 0..steps {
        if energy <= options.epsilon {
            termination = Termination::ResidualBelowEpsilon;
            break;
        }
        let mut scores = magnitudes(&corr);
        for &m in &support {
            scores[m] = f64::NEG_INFINITY;
        }
        let pick = top_s_indices(&scores, 1)?[0];
        let mut trial = support.clone();
        trial.push(pick);
        trial.sort_unstable();
        let fit = match problem.fit(&trial) {
            Ok(f) => f,
            Err(Error::RankDeficient { .. }) if !support.is_empty() => {
                termination = Termination::RankFailure;
                break;
            }
            Err(e) => return Err(e),
        };
        support = trial;
        coefficients = fit.coefficients;
        corr = fit.residual_correlation;
        energy = fit.residual_energy;
        supports.push(support.clone());
        energies.push(energy);
    }
    if termination == Termination::MaxIter && support.len() == options.sparsity {
        termination = Termination::SparsityReached;
    }
    Ok(finish(n, support, coefficients, supports, energies, termination))
}
