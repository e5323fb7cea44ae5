use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::estimator::recursion::{self, instrument, regressor};
use crate::estimator::{CenteringPopulation, EstimatorKind, FitOptions, FitResult};
use crate::model::{Dataset, Subject};

/// Per-subject influence curves of the fitted effects.
///
/// Scaled so that `B̂(t_k) - B(t_k) ≈ (1/n) Σ_i ε_i(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceCurves {
    grid: Vec<f64>,
    /// `curve[c][[k, i]]`: coordinate `c` of subject `i` at jump `k`.
    curve: [Array2<f64>; 2],
    /// `beta[c][i]`.
    beta: [Vec<f64>; 2],
    /// Subject indices in the order multiplier draws are assigned.
    order: Vec<usize>,
}

impl InfluenceCurves {
    /// Assembles curves from `K × n` arrays and length-`n` constant-effect terms.
    pub fn new(
        grid: Vec<f64>,
        curve_d: Array2<f64>,
        curve_z: Array2<f64>,
        beta_d: Vec<f64>,
        beta_z: Vec<f64>,
    ) -> Result<Self> {
        let k = grid.len();
        let n = beta_d.len();
        if curve_d.dim() != (k, n) || curve_z.dim() != (k, n) || beta_z.len() != n {
            return Err(Error::invalid(format!(
                "influence arrays {:?}, {:?}, {}, {} do not match {k} jumps and {n} subjects",
                curve_d.dim(),
                curve_z.dim(),
                beta_d.len(),
                beta_z.len()
            )));
        }
        Ok(Self {
            grid,
            curve: [curve_d, curve_z],
            beta: [beta_d, beta_z],
            order: (0..n).collect(),
        })
    }

    /// Replaces the identity multiplier order; `order` must be a permutation of `0..n`.
    pub fn with_order(mut self, order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; self.subjects()];
        for &i in &order {
            if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid("multiplier order is not a permutation of the subjects"));
            }
        }
        if order.len() != seen.len() {
            return Err(Error::invalid("multiplier order is not a permutation of the subjects"));
        }
        self.order = order;
        Ok(self)
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn subjects(&self) -> usize {
        self.beta[0].len()
    }

    pub fn eps(&self, subject: usize, jump: usize) -> [f64; 2] {
        [self.curve[0][[jump, subject]], self.curve[1][[jump, subject]]]
    }

    /// `K × n` view of one coordinate.
    pub fn component(&self, coordinate: usize) -> ArrayView2<'_, f64> {
        self.curve[coordinate].view()
    }

    pub fn beta_component(&self, coordinate: usize) -> &[f64] {
        &self.beta[coordinate]
    }

    /// `sqrt(Σ_i ε_i(t_k)^2) / n` per jump and coordinate.
    pub fn se_curve(&self) -> Vec<[f64; 2]> {
        let n = self.subjects() as f64;
        (0..self.grid.len())
            .map(|k| [0, 1].map(|c| self.curve[c].row(k).iter().map(|e| e * e).sum::<f64>().sqrt() / n))
            .collect()
    }

    pub fn se_beta(&self) -> [f64; 2] {
        let n = self.subjects() as f64;
        [0, 1].map(|c| self.beta[c].iter().map(|e| e * e).sum::<f64>().sqrt() / n)
    }
}

/// Subjects sorted by their full record, so that multiplier draws follow
/// the subjects rather than their position in the file.
fn canonical_order(subjects: &[Subject]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..subjects.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&subjects[a], &subjects[b]);
        x.id.cmp(&y.id)
            .then(x.followup.total_cmp(&y.followup))
            .then(x.event.cmp(&y.event))
            .then(x.arm.cmp(&y.arm))
            .then(x.path.initial().cmp(&y.path.initial()))
            .then_with(|| {
                let key = |s: &Subject| {
                    s.path
                        .switches()
                        .iter()
                        .map(|&(t, d)| (t.to_bits(), d))
                        .collect::<Vec<_>>()
                };
                key(x).cmp(&key(y))
            })
    });
    order
}

#[derive(Debug, Clone, Copy)]
struct Switch {
    /// Number of jump times strictly before the switch.
    jumps_before: usize,
    delta: f64,
}

/// Linearization of the fitted recursion around the estimate.
///
/// Each jump solves `Σ_i v_i W_i r_i = 0` with residual
/// `r_i = dN_i - Y_i x_i^T ΔB`. A subject enters through its own term
/// `H_i r_i` with `H_i = M^† v_i W_i`, through the centering means `E_n(Z)`
/// and `E_n{D(t) | Z}`, and through earlier jumps, which move every survivor
/// weight `W_i` and feed back via `(1/n) Σ_i H_i r_i δlog W_i`.
pub fn influence_curves(data: &Dataset, fit: &FitResult) -> Result<InfluenceCurves> {
    let subjects = data.subjects();
    let n = subjects.len();
    let nf = n as f64;
    let kind = fit.kind;
    let times = data.event_times();
    if times.as_slice() != fit.curve.jump_times() || fit.n != n || fit.tau != data.tau() {
        return Err(Error::invalid("fit was not produced on this dataset"));
    }
    let k_total = times.len();
    let opts = FitOptions {
        pinv_rtol: fit.diagnostics.pinv_rtol,
        centering: fit.diagnostics.centering,
    };

    let switches: Vec<Vec<Switch>> = subjects
        .iter()
        .map(|s| {
            let mut prev = s.path.initial();
            s.path
                .switches()
                .iter()
                .filter(|(t, _)| *t <= s.followup)
                .map(|&(t, d)| {
                    let delta = f64::from(u8::from(d)) - f64::from(u8::from(prev));
                    prev = d;
                    Switch {
                        jumps_before: times.partition_point(|&u| u < t),
                        delta,
                    }
                })
                .collect()
        })
        .collect();

    let arm_counts = subjects.iter().fold([0usize; 2], |mut acc, s| {
        acc[s.arm as usize] += 1;
        acc
    });
    let z_mean = arm_counts[1] as f64 / nf;

    let mut cum = [Array2::<f64>::zeros((k_total, n)), Array2::<f64>::zeros((k_total, n))];
    let mut phi = [vec![0.0; n], vec![0.0; n]];
    let mut coef: Vec<[f64; 2]> = Vec::with_capacity(n);
    let mut switch_coef = vec![[0.0f64; 2]; k_total];
    let mut touched: Vec<usize> = Vec::new();

    recursion::run(data, kind, &opts, |ctx| {
        let k = ctx.k;
        if ctx.jump != fit.curve.increments()[k] {
            return Err(Error::invalid(
                "fit was not produced on this dataset with its recorded options",
            ));
        }
        phi[0].iter_mut().for_each(|x| *x = 0.0);
        phi[1].iter_mut().for_each(|x| *x = 0.0);
        coef.clear();

        // Own estimating-function terms, plus the sensitivities of the jump
        // equation to the arm mean of Z (`g`) and of D(t) within each arm (`q`).
        let mut g = [0.0f64; 2];
        let mut q = [[0.0f64; 2]; 2];
        let mut weight_sum = [0.0f64; 2];
        let mut risk_count = [0usize; 2];
        for (p, &i) in ctx.at_risk.iter().enumerate() {
            let s = &subjects[i];
            let arm = s.arm as usize;
            let w = ctx.weight[p];
            let v = instrument(kind, ctx.zc[i], ctx.treat_centered[p]);
            let h = ctx.pinv.apply([v[0] * w, v[1] * w]);
            let x = regressor(kind, ctx.treat[p], s.arm_f64());
            let dn = if ctx.event[p] { 1.0 } else { 0.0 };
            let r = dn - (x[0] * ctx.jump[0] + x[1] * ctx.jump[1]);
            let hr = [h[0] * r, h[1] * r];
            phi[0][i] = hr[0];
            phi[1][i] = hr[1];
            coef.push(hr);
            let dv = instrument(kind, -1.0, ctx.treat_centered[p]);
            g[0] += dv[0] * w * r / nf;
            g[1] += dv[1] * w * r / nf;
            // d v / d E_n{D(t) | Z}: only the second instrument depends on it.
            let dv_dmean = match kind {
                EstimatorKind::Robust => -ctx.zc[i],
                EstimatorKind::Ytt => 0.0,
            };
            q[arm][1] += dv_dmean * w * r / nf;
            weight_sum[arm] += w;
            risk_count[arm] += 1;
        }
        let pg = ctx.pinv.apply(g);
        let pq = [ctx.pinv.apply(q[0]), ctx.pinv.apply(q[1])];
        let mut add = |l: usize, v: [f64; 2], f: f64| {
            phi[0][l] += v[0] * f;
            phi[1][l] += v[1] * f;
        };
        match opts.centering {
            CenteringPopulation::SurvivorWeighted => {
                for (p, &i) in ctx.at_risk.iter().enumerate() {
                    let arm = subjects[i].arm as usize;
                    let f = nf * ctx.weight[p] * ctx.treat_centered[p] / weight_sum[arm];
                    add(i, pq[arm], f);
                    coef[p][0] += pq[arm][0] * f;
                    coef[p][1] += pq[arm][1] * f;
                }
            }
            CenteringPopulation::AtRisk => {
                for (p, &i) in ctx.at_risk.iter().enumerate() {
                    let arm = subjects[i].arm as usize;
                    add(i, pq[arm], nf * ctx.treat_centered[p] / risk_count[arm] as f64);
                }
            }
            CenteringPopulation::AllSubjects => {
                for (l, s) in subjects.iter().enumerate() {
                    let arm = s.arm as usize;
                    let d = if s.effective_treatment(ctx.time) { 1.0 } else { 0.0 };
                    add(l, pq[arm], nf * (d - ctx.d_mean[arm]) / arm_counts[arm] as f64);
                }
            }
        }
        for (l, s) in subjects.iter().enumerate() {
            add(l, pg, s.arm_f64() - z_mean);
        }

        // Sensitivity to earlier jumps through the survivor weights.
        let mut a = [[0.0f64; 2]; 2];
        for m in touched.drain(..) {
            switch_coef[m] = [0.0; 2];
        }
        if k > 0 {
            let prev_time = times[k - 1];
            for (p, &i) in ctx.at_risk.iter().enumerate() {
                let c = coef[p];
                if c == [0.0; 2] {
                    continue;
                }
                let s = &subjects[i];
                let d_prev = if s.path.value_at(prev_time) { 1.0 } else { 0.0 };
                let xp = regressor(kind, d_prev, s.arm_f64());
                for row in 0..2 {
                    a[row][0] += c[row] * xp[0] / nf;
                    a[row][1] += c[row] * xp[1] / nf;
                }
                for sw in &switches[i] {
                    let m = sw.jumps_before;
                    if m >= 1 && m < k {
                        if switch_coef[m] == [0.0; 2] {
                            touched.push(m);
                        }
                        switch_coef[m][0] += c[0] * sw.delta / nf;
                        switch_coef[m][1] += c[1] * sw.delta / nf;
                    }
                }
            }
        }

        if k > 0 {
            let prev_d = cum[0].row(k - 1);
            let prev_z = cum[1].row(k - 1);
            for l in 0..n {
                phi[0][l] += a[0][0] * prev_d[l] + a[0][1] * prev_z[l];
                phi[1][l] += a[1][0] * prev_d[l] + a[1][1] * prev_z[l];
            }
            for &m in &touched {
                let c = switch_coef[m];
                let hist = cum[0].row(m - 1);
                for l in 0..n {
                    phi[0][l] -= c[0] * hist[l];
                    phi[1][l] -= c[1] * hist[l];
                }
            }
        }
        for c in 0..2 {
            for l in 0..n {
                let prev = if k > 0 { cum[c][[k - 1, l]] } else { 0.0 };
                cum[c][[k, l]] = prev + phi[c][l];
            }
        }
        if cum[0].row(k).iter().chain(cum[1].row(k).iter()).any(|x| !x.is_finite()) {
            return Err(Error::NumericFailure {
                jump: k,
                message: format!("non-finite influence curve at t = {}", ctx.time),
            });
        }
        Ok(())
    })?;

    let beta = beta_influence(data, fit, &cum);
    let [curve_d, curve_z] = cum;
    InfluenceCurves::new(times, curve_d, curve_z, beta[0].clone(), beta[1].clone())?
        .with_order(canonical_order(subjects))
}

/// `Σ_k w_k δΔB_k + Σ_k ΔB_k δw_k`, with the weight perturbation coming from
/// the empirical risk-set fraction and its integral.
fn beta_influence(data: &Dataset, fit: &FitResult, cum: &[Array2<f64>; 2]) -> [Vec<f64>; 2] {
    let subjects = data.subjects();
    let n = subjects.len();
    let tau = data.tau();
    let norm = fit.weight_normalizer;
    let times = fit.curve.jump_times();
    let incs = fit.curve.increments();
    let mut out = [vec![0.0; n], vec![0.0; n]];
    for (k, &t) in times.iter().enumerate() {
        let w = fit.weights[k];
        let w_tilde = w * norm;
        for l in 0..n {
            for c in 0..2 {
                let prev = if k > 0 { cum[c][[k - 1, l]] } else { 0.0 };
                out[c][l] += w * (cum[c][[k, l]] - prev);
            }
        }
        for (l, s) in subjects.iter().enumerate() {
            let y = if s.followup >= t { 1.0 } else { 0.0 };
            let dw = (y - w_tilde) / norm - w_tilde * (s.followup.min(tau) - norm) / (norm * norm);
            out[0][l] += incs[k][0] * dw;
            out[1][l] += incs[k][1] * dw;
        }
    }
    out
}
