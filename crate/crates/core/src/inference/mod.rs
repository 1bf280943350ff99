//! Exact inference conditioned on the (component, start) cut-set.
//!
//! Fixing the component and start turns each curve's network into a plain
//! left-to-right chain over grid positions: the offset is a deterministic
//! function of the cut-set, emissions are diagonal Gaussians of the
//! translated observations, and the usual forward–backward and max-product
//! recursions apply. Results for all cut-set values are combined with
//! log-sum-exp.
//!
//! All recursions run over the band of grid positions reachable from the
//! start after `j` steps, so a linear-path model costs `O(L)` per cut-set
//! value and a warping model `O(S L^2)`.

mod brute_force;

pub use brute_force::{
    brute_force_loglik, enumerate_paths, CutsetEnumeration, Enumeration, DEFAULT_PATH_GUARD,
};

use std::f64::consts::PI;

use crate::error::InferenceError;
use crate::model::{Alignment, Curve, Topology, WarpMixtureModel};
use crate::offset::segment_offset;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Log density of `y` under a diagonal Gaussian.
pub fn emission_logdensity(y: &[f64], mean: &[f64], var: &[f64]) -> Result<f64, InferenceError> {
    if y.len() != mean.len() || y.len() != var.len() {
        return Err(InferenceError::DimensionMismatch {
            id: String::new(),
            expected: mean.len(),
            found: y.len(),
        });
    }
    let finite = y.iter().chain(mean).chain(var).all(|v| v.is_finite());
    if !finite || var.iter().any(|&v| v <= 0.0) {
        return Err(InferenceError::NonFinite);
    }
    Ok(y.iter()
        .zip(mean)
        .zip(var)
        .map(|((y, m), v)| -0.5 * (2.0 * PI * v).ln() - (y - m).powi(2) / (2.0 * v))
        .sum())
}

/// Posterior over the cut-set variables for one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CutsetPosterior {
    /// `table[k][g1] = P(Z = k, G1 = g1 | Y)`.
    pub table: Vec<Vec<f64>>,
    pub log_evidence: f64,
}

/// State-occupancy and step posteriors for one curve under a fixed cut-set.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancies {
    lo: Vec<usize>,
    row_start: Vec<usize>,
    gamma: Vec<f64>,
    n_offsets: usize,
    step_rows: usize,
    xi: Vec<f64>,
}

impl Occupancies {
    /// Number of observations.
    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    /// First grid position and posterior mass of the reachable band at step `j`.
    pub fn gamma_row(&self, j: usize) -> (usize, &[f64]) {
        let end = self
            .row_start
            .get(j + 1)
            .copied()
            .unwrap_or(self.gamma.len());
        (self.lo[j], &self.gamma[self.row_start[j]..end])
    }

    /// `P(G_j = t | Y, k, g1)`.
    pub fn gamma(&self, j: usize, t: usize) -> f64 {
        let (lo, row) = self.gamma_row(j);
        t.checked_sub(lo)
            .and_then(|i| row.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    /// Dense `L x grid_len` occupancy matrix.
    pub fn gamma_dense(&self, grid_len: usize) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|j| {
                let mut row = vec![0.0; grid_len];
                let (lo, vals) = self.gamma_row(j);
                row[lo..lo + vals.len()].copy_from_slice(vals);
                row
            })
            .collect()
    }

    /// Expected step-offset counts, one row per stored step distribution
    /// (a single row when transitions are tied, one per grid position otherwise).
    pub fn step_counts(&self) -> Vec<Vec<f64>> {
        self.xi
            .chunks(self.n_offsets)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub(crate) fn step_counts_flat(&self) -> &[f64] {
        &self.xi
    }

    pub fn step_rows(&self) -> usize {
        self.step_rows
    }
}

pub(crate) fn check_curve(curve: &Curve, topo: &Topology) -> Result<(), InferenceError> {
    if curve.dims() != topo.dims {
        return Err(InferenceError::DimensionMismatch {
            id: curve.id().to_string(),
            expected: topo.dims,
            found: curve.dims(),
        });
    }
    if curve.len() > topo.max_curve_len() {
        return Err(InferenceError::CurveTooLong {
            id: curve.id().to_string(),
            len: curve.len(),
            required: topo.max_shift - 1 + curve.len(),
            grid_len: topo.grid_len,
        });
    }
    Ok(())
}

fn check_cutset(topo: &Topology, k: usize, g1: usize) -> Result<(), InferenceError> {
    if k >= topo.components || g1 >= topo.max_shift {
        return Err(InferenceError::CutsetOutOfRange {
            component: k,
            start: g1,
        });
    }
    Ok(())
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-domain tables derived once per model.
pub(crate) struct Prepared<'m> {
    pub(crate) model: &'m WarpMixtureModel,
    pub(crate) topo: Topology,
    log_weights: Vec<f64>,
    log_init: Vec<f64>,
    log_trans: Vec<f64>,
    trans: Vec<f64>,
    log_norm: Vec<f64>,
    inv_var: Vec<f64>,
}

impl<'m> Prepared<'m> {
    pub(crate) fn new(model: &'m WarpMixtureModel) -> Self {
        let topo = *model.topology();
        let (k, m, t_len, d, n_off) = (
            topo.components,
            topo.max_shift,
            topo.grid_len,
            topo.dims,
            topo.n_offsets(),
        );
        let log_weights = model.weights().iter().map(|w| w.ln()).collect();
        let log_init = (0..k)
            .flat_map(|c| model.init_row(c).iter().map(|p| p.ln()))
            .collect::<Vec<_>>();
        debug_assert_eq!(log_init.len(), k * m);
        let mut trans = Vec::with_capacity(k * t_len * n_off);
        for c in 0..k {
            for t in 0..t_len {
                trans.extend(model.renormalized_step_row(c, t));
            }
        }
        let log_trans = trans.iter().map(|p| p.ln()).collect();
        let mut log_norm = Vec::with_capacity(k * t_len);
        let mut inv_var = Vec::with_capacity(k * t_len * d);
        for c in 0..k {
            for t in 0..t_len {
                let var = model.variance(c, t);
                log_norm.push(var.iter().map(|v| -0.5 * (LN_2PI + v.ln())).sum());
                inv_var.extend(var.iter().map(|v| 1.0 / v));
            }
        }
        Prepared {
            model,
            topo,
            log_weights,
            log_init,
            log_trans,
            trans,
            log_norm,
            inv_var,
        }
    }

    pub(crate) fn log_weight(&self, k: usize) -> f64 {
        self.log_weights[k]
    }

    pub(crate) fn log_init(&self, k: usize, g1: usize) -> f64 {
        self.log_init[k * self.topo.max_shift + g1]
    }

    #[inline]
    fn log_trans(&self, k: usize, t: usize, o: usize) -> f64 {
        self.log_trans[(k * self.topo.grid_len + t) * self.topo.n_offsets() + o]
    }

    #[inline]
    fn trans(&self, k: usize, t: usize, o: usize) -> f64 {
        self.trans[(k * self.topo.grid_len + t) * self.topo.n_offsets() + o]
    }

    /// Offset for the cut-set value `(k, g1)`.
    pub(crate) fn offset(&self, curve: &Curve, k: usize, g1: usize) -> Vec<f64> {
        if self.topo.offsets_enabled {
            segment_offset(curve, |j| self.model.mean(k, g1 + j))
        } else {
            vec![0.0; self.topo.dims]
        }
    }

    #[inline]
    fn emission(&self, k: usize, t: usize, y: &[f64]) -> f64 {
        let d = self.topo.dims;
        let base = (k * self.topo.grid_len + t) * d;
        let mu = self.model.mean(k, t);
        let iv = &self.inv_var[base..base + d];
        let mut quad = 0.0;
        for i in 0..d {
            let r = y[i] - mu[i];
            quad += r * r * iv[i];
        }
        self.log_norm[k * self.topo.grid_len + t] - 0.5 * quad
    }

    /// Builds the banded emission lattice for cut-set `(k, g1)`.
    pub(crate) fn lattice(&self, curve: &Curve, k: usize, g1: usize) -> Lattice {
        let delta = self.offset(curve, k, g1);
        let translated: Vec<f64> = curve
            .points()
            .flat_map(|p| p.iter().zip(&delta).map(|(y, dl)| y - dl))
            .collect();
        let (d, len) = (self.topo.dims, curve.len());
        let last = self.topo.grid_len - 1;
        let mut lo = Vec::with_capacity(len);
        let mut hi = Vec::with_capacity(len);
        let mut row_start = Vec::with_capacity(len);
        let mut emis = Vec::new();
        for j in 0..len {
            let l = g1 + j * self.topo.min_step();
            let h = (g1 + j * (self.topo.max_skip + 1)).min(last);
            debug_assert!(l <= h);
            row_start.push(emis.len());
            let y = &translated[j * d..(j + 1) * d];
            emis.extend((l..=h).map(|t| self.emission(k, t, y)));
            lo.push(l);
            hi.push(h);
        }
        Lattice {
            k,
            g1,
            lo,
            hi,
            row_start,
            emis,
            translated,
            delta,
        }
    }

    /// Log-domain forward messages; exact where the scaled pass underflows.
    fn forward_log(&self, lat: &Lattice, buf: &mut Vec<f64>) -> (Vec<f64>, f64) {
        let n_off = self.topo.n_offsets();
        let mut alpha = vec![f64::NEG_INFINITY; lat.emis.len()];
        alpha[0] = lat.emis[0];
        for j in 1..lat.len() {
            let (plo, phi) = (lat.lo[j - 1], lat.hi[j - 1]);
            let prev = lat.row_start[j - 1];
            let cur = lat.row_start[j];
            for t in lat.lo[j]..=lat.hi[j] {
                buf.clear();
                for o in 0..n_off.min(t + 1) {
                    let s = t - o;
                    if s < plo || s > phi {
                        continue;
                    }
                    let a = alpha[prev + s - plo];
                    if a == f64::NEG_INFINITY {
                        continue;
                    }
                    buf.push(a + self.log_trans(lat.k, s, o));
                }
                let i = cur + t - lat.lo[j];
                alpha[i] = log_sum_exp(buf) + lat.emis[i];
            }
        }
        let last = lat.len() - 1;
        let ll = log_sum_exp(&alpha[lat.row_start[last]..]);
        (alpha, ll)
    }

    fn backward_log(&self, lat: &Lattice, buf: &mut Vec<f64>) -> Vec<f64> {
        let n_off = self.topo.n_offsets();
        let mut beta = vec![f64::NEG_INFINITY; lat.emis.len()];
        let last = lat.len() - 1;
        beta[lat.row_start[last]..].fill(0.0);
        for j in (0..last).rev() {
            let (nlo, nhi) = (lat.lo[j + 1], lat.hi[j + 1]);
            let next = lat.row_start[j + 1];
            for t in lat.lo[j]..=lat.hi[j] {
                buf.clear();
                for o in 0..n_off {
                    let u = t + o;
                    if u < nlo || u > nhi {
                        continue;
                    }
                    let lt = self.log_trans(lat.k, t, o);
                    if lt == f64::NEG_INFINITY {
                        continue;
                    }
                    let i = next + u - nlo;
                    buf.push(lt + lat.emis[i] + beta[i]);
                }
                beta[lat.row_start[j] + t - lat.lo[j]] = log_sum_exp(buf);
            }
        }
        beta
    }

    fn forward_backward_log(&self, lat: &Lattice) -> (Occupancies, f64) {
        let mut buf = Vec::with_capacity(self.topo.n_offsets());
        let (alpha, ll) = self.forward_log(lat, &mut buf);
        let n_off = self.topo.n_offsets();
        let step_rows = if self.topo.tie_transitions {
            1
        } else {
            self.topo.grid_len
        };
        let mut xi = vec![0.0; step_rows * n_off];
        let mut gamma = vec![0.0; lat.emis.len()];
        if ll == f64::NEG_INFINITY {
            return (lat.occupancies(gamma, xi, step_rows, n_off), ll);
        }
        let beta = self.backward_log(lat, &mut buf);
        for (g, (a, b)) in gamma.iter_mut().zip(alpha.iter().zip(&beta)) {
            *g = (a + b - ll).exp();
        }
        for j in 0..lat.len().saturating_sub(1) {
            let (nlo, nhi) = (lat.lo[j + 1], lat.hi[j + 1]);
            let next = lat.row_start[j + 1];
            for t in lat.lo[j]..=lat.hi[j] {
                let a = alpha[lat.row_start[j] + t - lat.lo[j]];
                if a == f64::NEG_INFINITY {
                    continue;
                }
                let row = if self.topo.tie_transitions { 0 } else { t };
                for o in 0..n_off {
                    let u = t + o;
                    if u < nlo || u > nhi {
                        continue;
                    }
                    let lt = self.log_trans(lat.k, t, o);
                    if lt == f64::NEG_INFINITY {
                        continue;
                    }
                    let i = next + u - nlo;
                    xi[row * n_off + o] += (a + lt + lat.emis[i] + beta[i] - ll).exp();
                }
            }
        }
        (lat.occupancies(gamma, xi, step_rows, n_off), ll)
    }

    /// Scaled forward pass, `NaN` when a row normalizer underflows. Each row of `alpha` sums to one; the returned
    /// scales are the per-row normalizers of the row-max-shifted emissions.
    fn forward(&self, lat: &Lattice, e: &[f64], row_max: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let n_off = self.topo.n_offsets();
        let mut alpha = vec![0.0; e.len()];
        let mut scale = vec![0.0; lat.len()];
        if row_max.contains(&f64::NEG_INFINITY) {
            return (alpha, scale, f64::NEG_INFINITY);
        }
        alpha[0] = 1.0;
        scale[0] = e[0];
        let mut ll = e[0].ln() + row_max[0];
        for j in 1..lat.len() {
            let (plo, phi) = (lat.lo[j - 1], lat.hi[j - 1]);
            let prev = lat.row_start[j - 1];
            let cur = lat.row_start[j];
            let mut total = 0.0;
            for t in lat.lo[j]..=lat.hi[j] {
                let mut acc = 0.0;
                for o in 0..n_off.min(t + 1) {
                    let s = t - o;
                    if s < plo || s > phi {
                        continue;
                    }
                    acc += alpha[prev + s - plo] * self.trans(lat.k, s, o);
                }
                let i = cur + t - lat.lo[j];
                alpha[i] = acc * e[i];
                total += alpha[i];
            }
            if !total.is_normal() {
                return (alpha, scale, f64::NAN);
            }
            let inv = 1.0 / total;
            alpha[cur..cur + lat.hi[j] - lat.lo[j] + 1]
                .iter_mut()
                .for_each(|a| *a *= inv);
            scale[j] = total;
            ll += total.ln() + row_max[j];
        }
        (alpha, scale, ll)
    }

    /// Scaled backward pass matching [`Self::forward`]: `alpha * beta` is the
    /// posterior occupancy.
    fn backward(&self, lat: &Lattice, e: &[f64], scale: &[f64]) -> Vec<f64> {
        let n_off = self.topo.n_offsets();
        let mut beta = vec![0.0; e.len()];
        let last = lat.len() - 1;
        beta[lat.row_start[last]..].fill(1.0);
        for j in (0..last).rev() {
            let (nlo, nhi) = (lat.lo[j + 1], lat.hi[j + 1]);
            let next = lat.row_start[j + 1];
            let inv = 1.0 / scale[j + 1];
            for t in lat.lo[j]..=lat.hi[j] {
                let mut acc = 0.0;
                for o in 0..n_off {
                    let u = t + o;
                    if u < nlo || u > nhi {
                        continue;
                    }
                    let i = next + u - nlo;
                    acc += self.trans(lat.k, t, o) * e[i] * beta[i];
                }
                beta[lat.row_start[j] + t - lat.lo[j]] = acc * inv;
            }
        }
        beta
    }

    pub(crate) fn loglik(&self, curve: &Curve, k: usize, g1: usize) -> f64 {
        let lat = self.lattice(curve, k, g1);
        let (e, row_max) = lat.scaled_emissions();
        match self.forward(&lat, &e, &row_max).2 {
            ll if ll.is_nan() => self.forward_log(&lat, &mut Vec::new()).1,
            ll => ll,
        }
    }

    /// Occupancies and conditional log-likelihood; all-zero occupancies when
    /// the curve has zero probability under this cut-set value.
    pub(crate) fn forward_backward(&self, lat: &Lattice) -> (Occupancies, f64) {
        let (e, row_max) = lat.scaled_emissions();
        let (alpha, scale, ll) = self.forward(lat, &e, &row_max);
        if ll.is_nan() {
            return self.forward_backward_log(lat);
        }
        let n_off = self.topo.n_offsets();
        let step_rows = if self.topo.tie_transitions {
            1
        } else {
            self.topo.grid_len
        };
        let mut xi = vec![0.0; step_rows * n_off];
        if ll == f64::NEG_INFINITY {
            return (
                lat.occupancies(vec![0.0; e.len()], xi, step_rows, n_off),
                ll,
            );
        }
        let beta = self.backward(lat, &e, &scale);
        let gamma = alpha.iter().zip(&beta).map(|(a, b)| a * b).collect();
        for j in 0..lat.len().saturating_sub(1) {
            let (nlo, nhi) = (lat.lo[j + 1], lat.hi[j + 1]);
            let next = lat.row_start[j + 1];
            let inv = 1.0 / scale[j + 1];
            for t in lat.lo[j]..=lat.hi[j] {
                let a = alpha[lat.row_start[j] + t - lat.lo[j]] * inv;
                if a == 0.0 {
                    continue;
                }
                let row = if self.topo.tie_transitions { 0 } else { t };
                for o in 0..n_off {
                    let u = t + o;
                    if u < nlo || u > nhi {
                        continue;
                    }
                    let i = next + u - nlo;
                    xi[row * n_off + o] += a * self.trans(lat.k, t, o) * e[i] * beta[i];
                }
            }
        }
        (lat.occupancies(gamma, xi, step_rows, n_off), ll)
    }

    /// Forward–backward for `lat` with posteriors streamed instead of stored:
    /// `on_cell(j, t, w * gamma)` for every lattice cell with positive mass,
    /// and `w * xi` added into `xi` (a [`Topology::step_rows`] `x (S + 2)`
    /// table). Returns the conditional log-likelihood.
    pub(crate) fn stream_posteriors(
        &self,
        lat: &Lattice,
        w: f64,
        xi: &mut [f64],
        mut on_cell: impl FnMut(usize, usize, f64),
    ) -> f64 {
        let (e, row_max) = lat.scaled_emissions();
        let (alpha, scale, ll) = self.forward(lat, &e, &row_max);
        if ll == f64::NEG_INFINITY {
            return ll;
        }
        let n_off = self.topo.n_offsets();
        if ll.is_nan() {
            let (occ, ll) = self.forward_backward_log(lat);
            for j in 0..occ.len() {
                let (lo, row) = occ.gamma_row(j);
                for (i, &g) in row.iter().enumerate() {
                    if g > 0.0 {
                        on_cell(j, lo + i, w * g);
                    }
                }
            }
            for (acc, x) in xi.iter_mut().zip(occ.step_counts_flat()) {
                *acc += w * x;
            }
            return ll;
        }
        let last = lat.len() - 1;
        let width = (0..lat.len())
            .map(|j| lat.hi[j] - lat.lo[j] + 1)
            .max()
            .unwrap_or(1);
        let mut beta_next = vec![1.0; width];
        let mut beta = vec![0.0; width];
        let tail = lat.row_start[last];
        for (i, &a) in alpha[tail..].iter().enumerate() {
            if a > 0.0 {
                on_cell(last, lat.lo[last] + i, w * a);
            }
        }
        for j in (0..last).rev() {
            let (nlo, nhi) = (lat.lo[j + 1], lat.hi[j + 1]);
            let next = lat.row_start[j + 1];
            let cur = lat.row_start[j];
            let inv = 1.0 / scale[j + 1];
            for t in lat.lo[j]..=lat.hi[j] {
                let a = alpha[cur + t - lat.lo[j]];
                let carry = w * a * inv;
                let row = if self.topo.tie_transitions { 0 } else { t };
                let mut acc = 0.0;
                for o in 0..n_off {
                    let u = t + o;
                    if u < nlo || u > nhi {
                        continue;
                    }
                    let v = self.trans(lat.k, t, o) * e[next + u - nlo] * beta_next[u - nlo];
                    acc += v;
                    xi[row * n_off + o] += carry * v;
                }
                let b = acc * inv;
                beta[t - lat.lo[j]] = b;
                let g = a * b;
                if g > 0.0 {
                    on_cell(j, t, w * g);
                }
            }
            std::mem::swap(&mut beta, &mut beta_next);
        }
        ll
    }

    /// Max-product decode for one cut-set value: path log probability after the
    /// start plus emission log-likelihood, and the path itself.
    fn viterbi(&self, lat: &Lattice) -> (f64, Vec<usize>) {
        let n_off = self.topo.n_offsets();
        let last = lat.len() - 1;
        let mut best = vec![f64::NEG_INFINITY; lat.emis.len()];
        let mut choice = vec![0usize; lat.emis.len()];
        best[lat.row_start[last]..].fill(0.0);
        for j in (0..last).rev() {
            let (nlo, nhi) = (lat.lo[j + 1], lat.hi[j + 1]);
            let next = lat.row_start[j + 1];
            for t in lat.lo[j]..=lat.hi[j] {
                let mut top = f64::NEG_INFINITY;
                let mut arg = 0;
                // Ascending offsets with a strict comparison keeps the
                // lexicographically earliest path among ties.
                for o in 0..n_off {
                    let u = t + o;
                    if u < nlo || u > nhi {
                        continue;
                    }
                    let lt = self.log_trans(lat.k, t, o);
                    if lt == f64::NEG_INFINITY {
                        continue;
                    }
                    let i = next + u - nlo;
                    let v = lt + lat.emis[i] + best[i];
                    if v > top {
                        top = v;
                        arg = o;
                    }
                }
                let i = lat.row_start[j] + t - lat.lo[j];
                best[i] = top;
                choice[i] = arg;
            }
        }
        let score = lat.emis[0] + best[0];
        let mut path = Vec::with_capacity(lat.len());
        let mut t = lat.g1;
        path.push(t);
        if score > f64::NEG_INFINITY {
            for j in 0..last {
                t += choice[lat.row_start[j] + t - lat.lo[j]];
                path.push(t);
            }
        }
        (score, path)
    }

    pub(crate) fn cutset_terms(&self, curve: &Curve) -> Vec<f64> {
        let (k, m) = (self.topo.components, self.topo.max_shift);
        let mut terms = Vec::with_capacity(k * m);
        for c in 0..k {
            for g1 in 0..m {
                let prior = self.log_weight(c) + self.log_init(c, g1);
                terms.push(if prior == f64::NEG_INFINITY {
                    prior
                } else {
                    prior + self.loglik(curve, c, g1)
                });
            }
        }
        terms
    }

    pub(crate) fn curve_loglik(&self, curve: &Curve) -> f64 {
        log_sum_exp(&self.cutset_terms(curve))
    }

    pub(crate) fn align(&self, curve: &Curve) -> Alignment {
        let mut best: Option<(f64, Lattice, Vec<usize>)> = None;
        for c in 0..self.topo.components {
            for g1 in 0..self.topo.max_shift {
                let prior = self.log_weight(c) + self.log_init(c, g1);
                if prior == f64::NEG_INFINITY && best.is_some() {
                    continue;
                }
                let lat = self.lattice(curve, c, g1);
                let (score, path) = self.viterbi(&lat);
                let total = prior + score;
                if best.as_ref().is_none_or(|(b, _, _)| total > *b) {
                    best = Some((total, lat, path));
                }
            }
        }
        let (log_joint, lat, path) = best.expect("at least one cut-set value");
        Alignment {
            curve_id: curve.id().to_string(),
            component: lat.k,
            start: lat.g1,
            path,
            offset: lat.delta,
            log_joint,
        }
    }
}

/// Banded emission log-densities for one curve and cut-set value.
pub(crate) struct Lattice {
    pub(crate) k: usize,
    pub(crate) g1: usize,
    lo: Vec<usize>,
    hi: Vec<usize>,
    row_start: Vec<usize>,
    emis: Vec<f64>,
    /// Offset-corrected observations, row-major `L x D`.
    pub(crate) translated: Vec<f64>,
    pub(crate) delta: Vec<f64>,
}

impl Lattice {
    pub(crate) fn len(&self) -> usize {
        self.lo.len()
    }

    /// Emissions shifted by each row's maximum log density and exponentiated,
    /// with the per-row maxima.
    fn scaled_emissions(&self) -> (Vec<f64>, Vec<f64>) {
        let mut e = vec![0.0; self.emis.len()];
        let mut row_max = Vec::with_capacity(self.len());
        for j in 0..self.len() {
            let (a, b) = (
                self.row_start[j],
                self.row_start[j] + self.hi[j] - self.lo[j] + 1,
            );
            let m = self.emis[a..b]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            if m > f64::NEG_INFINITY {
                for (out, v) in e[a..b].iter_mut().zip(&self.emis[a..b]) {
                    *out = (v - m).exp();
                }
            }
            row_max.push(m);
        }
        (e, row_max)
    }

    fn occupancies(
        &self,
        gamma: Vec<f64>,
        xi: Vec<f64>,
        step_rows: usize,
        n_offsets: usize,
    ) -> Occupancies {
        Occupancies {
            lo: self.lo.clone(),
            row_start: self.row_start.clone(),
            gamma,
            n_offsets,
            step_rows,
            xi,
        }
    }
}

/// `log P(Y | k, g1)`: forward recursion with the start fixed at `g1`.
pub fn conditional_curve_loglik(
    curve: &Curve,
    model: &WarpMixtureModel,
    k: usize,
    g1: usize,
) -> Result<f64, InferenceError> {
    check_curve(curve, model.topology())?;
    check_cutset(model.topology(), k, g1)?;
    Ok(Prepared::new(model).loglik(curve, k, g1))
}

/// Exact occupancy and step posteriors given `(k, g1)`, with `log P(Y | k, g1)`.
pub fn forward_backward(
    curve: &Curve,
    model: &WarpMixtureModel,
    k: usize,
    g1: usize,
) -> Result<(Occupancies, f64), InferenceError> {
    check_curve(curve, model.topology())?;
    check_cutset(model.topology(), k, g1)?;
    let prep = Prepared::new(model);
    let lat = prep.lattice(curve, k, g1);
    Ok(prep.forward_backward(&lat))
}

pub fn cutset_posterior(
    curve: &Curve,
    model: &WarpMixtureModel,
) -> Result<CutsetPosterior, InferenceError> {
    check_curve(curve, model.topology())?;
    let prep = Prepared::new(model);
    let terms = prep.cutset_terms(curve);
    let log_evidence = log_sum_exp(&terms);
    let m = model.topology().max_shift;
    let table = terms
        .chunks(m)
        .map(|row| row.iter().map(|v| (v - log_evidence).exp()).collect())
        .collect();
    Ok(CutsetPosterior {
        table,
        log_evidence,
    })
}

/// `log P(Y | model)`, marginalizing components, starts and paths.
pub fn curve_loglik(curve: &Curve, model: &WarpMixtureModel) -> Result<f64, InferenceError> {
    check_curve(curve, model.topology())?;
    Ok(Prepared::new(model).curve_loglik(curve))
}

/// Jointly most probable component, start and path. Ties go to the smallest
/// component, then the smallest start, then the lexicographically earliest path.
pub fn viterbi_align(curve: &Curve, model: &WarpMixtureModel) -> Result<Alignment, InferenceError> {
    check_curve(curve, model.topology())?;
    Ok(Prepared::new(model).align(curve))
}
