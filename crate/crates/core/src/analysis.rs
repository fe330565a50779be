//! Frequency responses, label-switching correction and posterior summaries.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{JmlsParams, ModelMatrices};

/// Controllable canonical realisation of
/// `H(z) = (b₀ zⁿ + … + bₙ) / (a₀ zⁿ + … + aₙ)`, coefficients given from the
/// highest power down. Returns `(A, B, C, D)`.
pub fn controllable_canonical(
    num: &[f64],
    den: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    assert!(
        den.len() >= 2 && num.len() == den.len() && den[0] != 0.0,
        "need proper coefficients of equal length"
    );
    let n = den.len() - 1;
    let a: Vec<f64> = den.iter().map(|v| v / den[0]).collect();
    let b: Vec<f64> = num.iter().map(|v| v / den[0]).collect();
    let mut am = DMatrix::zeros(n, n);
    for j in 0..n {
        am[(0, j)] = -a[j + 1];
    }
    for i in 1..n {
        am[(i, i - 1)] = 1.0;
    }
    let mut bm = DMatrix::zeros(n, 1);
    bm[(0, 0)] = 1.0;
    let cm = DMatrix::from_fn(1, n, |_, j| b[j + 1] - b[0] * a[j + 1]);
    let dm = DMatrix::from_element(1, 1, b[0]);
    (am, bm, cm, dm)
}

/// `n` logarithmically spaced frequencies in `(10⁻³ π, π]`.
pub fn log_grid(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|j| std::f64::consts::PI * 10f64.powf(-3.0 + 3.0 * j as f64 / n as f64))
        .collect()
}

/// `H(e^{jω}) = C (e^{jω} I − A)⁻¹ B + D` on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub frequencies: Vec<f64>,
    /// One `n_y x n_u` matrix per frequency.
    pub response: Vec<DMatrix<Complex64>>,
    /// Grid points where `e^{jω} I − A` is numerically singular; their
    /// response entries are NaN.
    pub singular: Vec<bool>,
}

impl FrequencyResponse {
    pub fn magnitude(&self, output: usize, input: usize) -> Vec<f64> {
        self.response
            .iter()
            .map(|h| h[(output, input)].norm())
            .collect()
    }

    pub fn phase(&self, output: usize, input: usize) -> Vec<f64> {
        self.response
            .iter()
            .map(|h| h[(output, input)].arg())
            .collect()
    }

    /// Magnitude in decibels, `20 log₁₀ |H|`.
    pub fn magnitude_db(&self, output: usize, input: usize) -> Vec<f64> {
        self.magnitude(output, input)
            .iter()
            .map(|m| 20.0 * m.log10())
            .collect()
    }

    /// `ln |H|` over every channel, flattened frequency-major. Singular
    /// points are NaN.
    fn log_magnitudes(&self) -> Vec<f64> {
        self.response
            .iter()
            .flat_map(|h| h.iter().map(|v| v.norm().ln()).collect::<Vec<_>>())
            .collect()
    }
}

pub fn frequency_response(model: &ModelMatrices, grid: &[f64]) -> Result<FrequencyResponse> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "frequency grid must be strictly increasing".into(),
        ));
    }
    let n = model.n_x();
    let to_c = |m: &DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
    let (a, b, c, d) = (
        to_c(&model.a),
        to_c(&model.b),
        to_c(&model.c),
        to_c(&model.d),
    );
    let scale = model.a.norm().max(1.0);
    let mut response = Vec::with_capacity(grid.len());
    let mut singular = Vec::with_capacity(grid.len());
    for &w in grid {
        let zi = DMatrix::<Complex64>::identity(n, n) * Complex64::from_polar(1.0, w) - &a;
        let lu = zi.lu();
        let u = lu.u();
        let min_pivot = (0..n)
            .map(|i| u[(i, i)].norm())
            .fold(f64::INFINITY, f64::min);
        let solved = if min_pivot > 1e-13 * scale {
            lu.solve(&b)
        } else {
            None
        };
        match solved {
            Some(x) if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) => {
                response.push(&c * x + &d);
                singular.push(false);
            }
            _ => {
                response.push(DMatrix::from_element(
                    model.n_y(),
                    model.n_u(),
                    Complex64::new(f64::NAN, f64::NAN),
                ));
                singular.push(true);
            }
        }
    }
    Ok(FrequencyResponse {
        frequencies: grid.to_vec(),
        response,
        singular,
    })
}

/// Squared L2 distance between two log-magnitude profiles over the points
/// where both are finite.
fn profile_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| (x - y).powi(2))
        .sum()
}

/// Optimal assignment of sample models to reference labels. `cost[r][i]`
/// is the cost of giving sample model `i` label `r`; the result maps label
/// `r` to sample model `perm[r]`.
fn assign(cost: &[Vec<f64>]) -> Vec<usize> {
    let m = cost.len();
    if m <= 6 {
        let mut best = (0..m).collect::<Vec<_>>();
        let mut best_cost = f64::INFINITY;
        let mut perm: Vec<usize> = (0..m).collect();
        loop {
            let total: f64 = perm.iter().enumerate().map(|(r, &i)| cost[r][i]).sum();
            if total < best_cost {
                best_cost = total;
                best.clone_from(&perm);
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
        best
    } else {
        let mut used = vec![false; m];
        let mut perm = Vec::with_capacity(m);
        for row in cost {
            let (i, _) = row.iter().enumerate().filter(|(i, _)| !used[*i]).fold(
                (usize::MAX, f64::INFINITY),
                |acc, (i, c)| {
                    if *c < acc.1 || acc.0 == usize::MAX {
                        (i, *c)
                    } else {
                        acc
                    }
                },
            );
            used[i] = true;
            perm.push(i);
        }
        perm
    }
}

/// Lexicographic successor; `false` once the last permutation is reached.
fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let Some(i) = (0..n - 1).rev().find(|&i| p[i] < p[i + 1]) else {
        return false;
    };
    let j = (i + 1..n)
        .rev()
        .find(|&j| p[j] > p[i])
        .expect("successor exists");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

fn relabel_profiles(sample: &[Vec<f64>], reference: &[Vec<f64>]) -> Vec<usize> {
    let cost: Vec<Vec<f64>> = reference
        .iter()
        .map(|r| sample.iter().map(|s| profile_distance(s, r)).collect())
        .collect();
    assign(&cost)
}

fn model_profiles(theta: &JmlsParams, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    theta
        .models
        .iter()
        .map(|m| frequency_response(m, grid).map(|r| r.log_magnitudes()))
        .collect()
}

/// Label permutation that best matches `theta`'s modes to `reference`, by
/// L2 distance of log-magnitude responses. Apply it with
/// [`JmlsParams::permuted`]. Exhaustive for `m ≤ 6`, greedy beyond; ties
/// go to the lexicographically smallest permutation.
pub fn relabel_sample(theta: &JmlsParams, reference: &[FrequencyResponse]) -> Result<Vec<usize>> {
    if reference.len() != theta.num_models() {
        return Err(Error::Dimension(format!(
            "{} reference responses for {} models",
            reference.len(),
            theta.num_models()
        )));
    }
    let grid = &reference[0].frequencies;
    if reference.iter().any(|r| &r.frequencies != grid) {
        return Err(Error::InvalidArgument(
            "reference responses use different grids".into(),
        ));
    }
    let sample = model_profiles(theta, grid)?;
    let refs: Vec<Vec<f64>> = reference
        .iter()
        .map(FrequencyResponse::log_magnitudes)
        .collect();
    Ok(relabel_profiles(&sample, &refs))
}

/// Permutations that align every sample with a common labelling.
///
/// With `truth`, samples are matched to its responses. Otherwise the
/// reference is the per-label mean log-magnitude response, refined by
/// alternating relabelling and averaging until the labelling is stable.
pub fn relabel_chain(
    samples: &[JmlsParams],
    truth: Option<&JmlsParams>,
    grid: &[f64],
) -> Result<Vec<Vec<usize>>> {
    let profiles = samples
        .iter()
        .map(|t| model_profiles(t, grid))
        .collect::<Result<Vec<_>>>()?;
    if let Some(truth) = truth {
        let refs = model_profiles(truth, grid)?;
        return Ok(profiles
            .iter()
            .map(|p| relabel_profiles(p, &refs))
            .collect());
    }
    let Some(first) = profiles.first() else {
        return Ok(Vec::new());
    };
    let m = first.len();
    let mut perms: Vec<Vec<usize>> = vec![(0..m).collect(); samples.len()];
    for _ in 0..20 {
        let refs = mean_profiles(&profiles, &perms);
        let next: Vec<Vec<usize>> = profiles
            .iter()
            .map(|p| relabel_profiles(p, &refs))
            .collect();
        if next == perms {
            break;
        }
        perms = next;
    }
    Ok(perms)
}

fn mean_profiles(profiles: &[Vec<Vec<f64>>], perms: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let m = profiles[0].len();
    let len = profiles[0][0].len();
    let mut sums = vec![vec![0.0; len]; m];
    let mut counts = vec![vec![0usize; len]; m];
    for (p, perm) in profiles.iter().zip(perms) {
        for (r, &i) in perm.iter().enumerate() {
            for (k, v) in p[i].iter().enumerate() {
                if v.is_finite() {
                    sums[r][k] += v;
                    counts[r][k] += 1;
                }
            }
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, c)| {
            s.iter()
                .zip(c)
                .map(|(v, n)| if *n > 0 { v / *n as f64 } else { f64::NAN })
                .collect()
        })
        .collect()
}

/// Sample quantile, linear interpolation between order statistics
/// (Hyndman–Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    /// Density per bin; integrates to one. A zero-width single bin carries
    /// density one.
    pub density: Vec<f64>,
}

/// Histogram with `bins` equal-width bins, or a Freedman–Diaconis width
/// when `bins` is `None` (Sturges when the interquartile range is zero).
pub fn histogram(values: &[f64], bins: Option<usize>) -> Histogram {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let range = hi - lo;
    if range <= 0.0 {
        return Histogram {
            edges: vec![lo, hi],
            density: vec![1.0],
        };
    }
    let n = sorted.len() as f64;
    let count = bins.unwrap_or_else(|| {
        let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
        let sturges = (n.log2().ceil() + 1.0) as usize;
        if iqr > 0.0 {
            let width = 2.0 * iqr / n.cbrt();
            ((range / width).ceil() as usize).clamp(1, 1000)
        } else {
            sturges
        }
    });
    let count = count.max(1);
    let width = range / count as f64;
    let edges: Vec<f64> = (0..=count)
        .map(|i| {
            if i == count {
                hi
            } else {
                lo + width * i as f64
            }
        })
        .collect();
    let mut tally = vec![0usize; count];
    for v in &sorted {
        let idx = (((v - lo) / width) as usize).min(count - 1);
        tally[idx] += 1;
    }
    Histogram {
        density: tally
            .iter()
            .enumerate()
            .map(|(i, c)| *c as f64 / (n * (edges[i + 1] - edges[i])))
            .collect(),
        edges,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantitySummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub ci95: (f64, f64),
    pub ci99: (f64, f64),
    pub histogram: Histogram,
}

pub fn summarize_values(name: &str, values: &[f64], bins: Option<usize>) -> QuantitySummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    QuantitySummary {
        name: name.to_string(),
        mean,
        sd: var.sqrt(),
        median: quantile(&sorted, 0.5),
        ci95: (quantile(&sorted, 0.025), quantile(&sorted, 0.975)),
        ci99: (quantile(&sorted, 0.005), quantile(&sorted, 0.995)),
        histogram: histogram(values, bins),
    }
}

/// Mean ± 3 sd envelope of one model's magnitude response, in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct BodeEnvelope {
    pub model: usize,
    pub output: usize,
    pub input: usize,
    pub frequencies: Vec<f64>,
    pub mean_db: Vec<f64>,
    pub lo3sd: Vec<f64>,
    pub hi3sd: Vec<f64>,
}

impl BodeEnvelope {
    /// Fraction of grid points where `response_db` lies inside the envelope.
    pub fn coverage(&self, response_db: &[f64]) -> f64 {
        let inside = response_db
            .iter()
            .zip(self.lo3sd.iter().zip(&self.hi3sd))
            .filter(|(v, (lo, hi))| **v >= **lo && **v <= **hi)
            .count();
        inside as f64 / response_db.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub name: String,
    pub truth: f64,
    pub in95: bool,
    pub in99: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodeCoverage {
    pub model: usize,
    pub output: usize,
    pub input: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone)]
pub struct SummaryOptions {
    pub relabel: bool,
    pub bins: Option<usize>,
    pub grid: Vec<f64>,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            relabel: true,
            bins: None,
            grid: log_grid(64),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    /// Label permutation applied to each sample.
    pub permutations: Vec<Vec<usize>>,
    /// Similarity-invariant scalars: `T_i_j`, `D`, `R` entries, and `A`
    /// when the state is scalar.
    pub quantities: Vec<QuantitySummary>,
    pub bode: Vec<BodeEnvelope>,
    pub coverage: Option<Vec<Coverage>>,
    pub bode_coverage: Option<Vec<BodeCoverage>>,
}

impl PosteriorSummary {
    pub fn quantity(&self, name: &str) -> Option<&QuantitySummary> {
        self.quantities.iter().find(|q| q.name == name)
    }

    pub fn transition_marginals(&self) -> impl Iterator<Item = &QuantitySummary> {
        self.quantities.iter().filter(|q| q.name.starts_with("T_"))
    }
}

/// Named similarity-invariant scalars of one parameter set. Scalar blocks
/// are named `A_i`, matrix blocks `D_i_r_c` (all one-based).
pub fn invariant_scalars(theta: &JmlsParams) -> Vec<(String, f64)> {
    let m = theta.num_models();
    let mut out = Vec::new();
    for i in 0..m {
        for j in 0..m {
            out.push((format!("T_{}_{}", i + 1, j + 1), theta.transition[(i, j)]));
        }
    }
    for (z, model) in theta.models.iter().enumerate() {
        let mut blocks = Vec::new();
        if model.n_x() == 1 {
            blocks.push(("A", &model.a));
        }
        blocks.push(("D", &model.d));
        blocks.push(("R", &model.r));
        for (name, mat) in blocks {
            if mat.len() == 1 {
                out.push((format!("{name}_{}", z + 1), mat[(0, 0)]));
            } else {
                for r in 0..mat.nrows() {
                    for c in 0..mat.ncols() {
                        out.push((format!("{name}_{}_{}_{}", z + 1, r + 1, c + 1), mat[(r, c)]));
                    }
                }
            }
        }
    }
    out
}

/// Posterior summaries of a chain, after relabelling (against `truth` when
/// given).
pub fn summarize(
    samples: &[JmlsParams],
    truth: Option<&JmlsParams>,
    options: &SummaryOptions,
) -> Result<PosteriorSummary> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidArgument(
            "cannot summarise an empty chain".into(),
        ));
    };
    let m = first.num_models();
    if samples.iter().any(|s| {
        s.num_models() != m
            || s.n_x() != first.n_x()
            || s.n_u() != first.n_u()
            || s.n_y() != first.n_y()
    }) {
        return Err(Error::Dimension(
            "chain samples have inconsistent dimensions".into(),
        ));
    }
    if let Some(t) = truth {
        if t.num_models() != m || t.n_u() != first.n_u() || t.n_y() != first.n_y() {
            return Err(Error::Dimension(
                "truth does not match the chain dimensions".into(),
            ));
        }
    }
    let permutations = if options.relabel {
        relabel_chain(samples, truth, &options.grid)?
    } else {
        vec![(0..m).collect(); samples.len()]
    };
    let aligned: Vec<JmlsParams> = samples
        .iter()
        .zip(&permutations)
        .map(|(s, p)| s.permuted(p))
        .collect();

    let scalars: Vec<Vec<(String, f64)>> = aligned.iter().map(invariant_scalars).collect();
    let quantities: Vec<QuantitySummary> = (0..scalars[0].len())
        .map(|q| {
            let values: Vec<f64> = scalars.iter().map(|s| s[q].1).collect();
            summarize_values(&scalars[0][q].0, &values, options.bins)
        })
        .collect();

    let (ny, nu) = (first.n_y(), first.n_u());
    let responses = aligned
        .iter()
        .map(|t| {
            t.models
                .iter()
                .map(|mm| frequency_response(mm, &options.grid))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut bode = Vec::new();
    for z in 0..m {
        for o in 0..ny {
            for i in 0..nu {
                let traces: Vec<Vec<f64>> =
                    responses.iter().map(|r| r[z].magnitude_db(o, i)).collect();
                let mut mean_db = Vec::with_capacity(options.grid.len());
                let mut lo3sd = Vec::with_capacity(options.grid.len());
                let mut hi3sd = Vec::with_capacity(options.grid.len());
                for k in 0..options.grid.len() {
                    let vals: Vec<f64> = traces
                        .iter()
                        .map(|t| t[k])
                        .filter(|v| v.is_finite())
                        .collect();
                    let n = vals.len() as f64;
                    let mean = vals.iter().sum::<f64>() / n;
                    let sd = if vals.len() > 1 {
                        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                    } else {
                        0.0
                    };
                    mean_db.push(mean);
                    lo3sd.push(mean - 3.0 * sd);
                    hi3sd.push(mean + 3.0 * sd);
                }
                bode.push(BodeEnvelope {
                    model: z,
                    output: o,
                    input: i,
                    frequencies: options.grid.clone(),
                    mean_db,
                    lo3sd,
                    hi3sd,
                });
            }
        }
    }

    let (coverage, bode_coverage) = match truth {
        Some(t) => {
            let cov = invariant_scalars(t)
                .into_iter()
                .filter_map(|(name, v)| {
                    quantities
                        .iter()
                        .find(|q| q.name == name)
                        .map(|q| Coverage {
                            in95: v >= q.ci95.0 && v <= q.ci95.1,
                            in99: v >= q.ci99.0 && v <= q.ci99.1,
                            name,
                            truth: v,
                        })
                })
                .collect();
            let truth_resp = t
                .models
                .iter()
                .map(|mm| frequency_response(mm, &options.grid))
                .collect::<Result<Vec<_>>>()?;
            let bcov = bode
                .iter()
                .map(|e| BodeCoverage {
                    model: e.model,
                    output: e.output,
                    input: e.input,
                    fraction: e.coverage(&truth_resp[e.model].magnitude_db(e.output, e.input)),
                })
                .collect();
            (Some(cov), Some(bcov))
        }
        None => (None, None),
    };

    Ok(PosteriorSummary {
        permutations,
        quantities,
        bode,
        coverage,
        bode_coverage,
    })
}

/// Evaluates `Σ b_i z^{n-i} / Σ a_i z^{n-i}` at `z = e^{jω}`.
pub fn polynomial_ratio(num: &[f64], den: &[f64], w: f64) -> Complex64 {
    let z = Complex64::from_polar(1.0, w);
    let horner = |c: &[f64]| {
        c.iter()
            .fold(Complex64::new(0.0, 0.0), |acc, v| acc * z + v)
    };
    horner(num) / horner(den)
}

/// Similarity transform `x → P x` of one mode, leaving its input/output
/// behaviour unchanged.
pub fn similarity_transform(model: &ModelMatrices, p: &DMatrix<f64>) -> Result<ModelMatrices> {
    let p_inv = p
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("similarity transform is singular".into()))?;
    ModelMatrices::new(
        p * &model.a * &p_inv,
        p * &model.b,
        &model.c * &p_inv,
        model.d.clone(),
        p * &model.q * p.transpose(),
        model.r.clone(),
        p * &model.s,
    )
}
