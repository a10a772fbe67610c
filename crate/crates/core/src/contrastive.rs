//! Projection head, cosine similarity, and the batch contrastive loss.
//!
//! A batch holds 2N projections where (2k, 2k+1) come from the same source
//! instance. Each ordered positive pair contributes
//! `-log( exp(sim(z_i, z_j)/tau) / sum_{k != i} exp(sim(z_i, z_k)/tau) )`,
//! with index-based self-exclusion in the denominator, and the batch loss
//! averages the 2N pair terms. Log-sum-exp uses max subtraction.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Two-layer ReLU projection `z = W2 . relu(W1 . h)`, no biases. Trained
/// during contrastive pre-training and discarded afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

impl ProjectionHead {
    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn validate_shapes(&self) -> Result<()> {
        if self.w1.nrows() != self.w2.ncols() {
            return Err(Error::Shape(format!(
                "projection head w1 is {}x{} but w2 is {}x{}",
                self.w1.nrows(),
                self.w1.ncols(),
                self.w2.nrows(),
                self.w2.ncols()
            )));
        }
        Ok(())
    }
}

/// Apply the projection head.
pub fn project(head: &ProjectionHead, h: &Array1<f64>) -> Array1<f64> {
    let a = head.w1.dot(h);
    let r = a.mapv(|v| v.max(0.0));
    head.w2.dot(&r)
}

/// Backward pass through the head: returns `(dh, dw1, dw2)` for upstream
/// gradient `dz`. The hidden pre-activation is recomputed from `h`.
pub fn project_backward(
    head: &ProjectionHead,
    h: &Array1<f64>,
    dz: &Array1<f64>,
) -> (Array1<f64>, Array2<f64>, Array2<f64>) {
    let a = head.w1.dot(h);
    let r = a.mapv(|v| v.max(0.0));
    // dw2[o][m] = dz[o] * r[m]
    let dw2 = outer(dz, &r);
    let dr = head.w2.t().dot(dz);
    let da: Array1<f64> = dr
        .iter()
        .zip(a.iter())
        .map(|(&g, &pre)| if pre > 0.0 { g } else { 0.0 })
        .collect();
    let dw1 = outer(&da, h);
    let dh = head.w1.t().dot(&da);
    (dh, dw1, dw2)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.len(), b.len()));
    for i in 0..a.len() {
        for j in 0..b.len() {
            out[[i, j]] = a[i] * b[j];
        }
    }
    out
}

/// Cosine similarity; zero vectors have no direction and are an error.
pub fn cosine_sim(a: &Array1<f64>, b: &Array1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Numeric("cosine similarity of a zero vector".into()));
    }
    Ok(a.dot(b) / (na * nb))
}

/// 2N projection vectors, pairs at (2k, 2k+1), plus the temperature.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    pub z: Vec<Array1<f64>>,
    pub tau: f64,
}

impl ContrastiveBatch {
    pub fn new(z: Vec<Array1<f64>>, tau: f64) -> Result<Self> {
        if z.len() < 2 || !z.len().is_multiple_of(2) {
            return Err(Error::Config(format!(
                "contrastive batch needs an even count >= 2, got {}",
                z.len()
            )));
        }
        if tau <= 0.0 || !tau.is_finite() {
            return Err(Error::Config(format!("temperature must be positive, got {tau}")));
        }
        let dim = z[0].len();
        for (i, v) in z.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::Shape(format!(
                    "projection {} has dimension {}, expected {dim}",
                    i,
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("projection {i} has non-finite entries")));
            }
            if v.iter().all(|&x| x == 0.0) {
                return Err(Error::Numeric(format!(
                    "projection {i} is the zero vector; cosine similarity is undefined"
                )));
            }
        }
        Ok(ContrastiveBatch { z, tau })
    }

    pub fn pair_count(&self) -> usize {
        self.z.len() / 2
    }

    fn sims(&self) -> Array2<f64> {
        let n = self.z.len();
        let mut s = Array2::zeros((n, n));
        for i in 0..n {
            s[[i, i]] = 1.0;
            for j in (i + 1)..n {
                let v = cosine_sim(&self.z[i], &self.z[j]).expect("batch vectors are nonzero");
                s[[i, j]] = v;
                s[[j, i]] = v;
            }
        }
        s
    }
}

fn pair_term(sims: &Array2<f64>, tau: f64, i: usize, j: usize) -> f64 {
    let n = sims.nrows();
    let mut max = f64::NEG_INFINITY;
    for k in 0..n {
        if k != i {
            max = max.max(sims[[i, k]] / tau);
        }
    }
    let mut z = 0.0;
    for k in 0..n {
        if k != i {
            z += (sims[[i, k]] / tau - max).exp();
        }
    }
    max + z.ln() - sims[[i, j]] / tau
}

/// One pair term `l(z_i, z_j)`. Panics if `i == j` or either index is out
/// of range (contract violations, not data errors).
pub fn nt_xent_pair_loss(batch: &ContrastiveBatch, i: usize, j: usize) -> f64 {
    assert!(i != j, "pair loss needs two distinct indices");
    assert!(i < batch.z.len() && j < batch.z.len(), "index out of range");
    pair_term(&batch.sims(), batch.tau, i, j)
}

/// The batch loss `L = (1/2N) sum_k [l(2k, 2k+1) + l(2k+1, 2k)]` and its
/// exact gradient with respect to every projection vector.
pub fn batch_contrastive_loss(batch: &ContrastiveBatch) -> (f64, Vec<Array1<f64>>) {
    let n2 = batch.z.len();
    let tau = batch.tau;
    let sims = batch.sims();

    let mut loss = 0.0;
    // dL/dS accumulated over ordered index pairs (a, b), a != b.
    let mut dsim = Array2::<f64>::zeros((n2, n2));
    let weight = 1.0 / n2 as f64;

    for pair in 0..batch.pair_count() {
        for (i, j) in [(2 * pair, 2 * pair + 1), (2 * pair + 1, 2 * pair)] {
            loss += pair_term(&sims, tau, i, j) * weight;
            // Softmax over k != i of sims[i][k]/tau.
            let mut max = f64::NEG_INFINITY;
            for k in 0..n2 {
                if k != i {
                    max = max.max(sims[[i, k]] / tau);
                }
            }
            let mut z = 0.0;
            for k in 0..n2 {
                if k != i {
                    z += (sims[[i, k]] / tau - max).exp();
                }
            }
            for k in 0..n2 {
                if k != i {
                    let p = (sims[[i, k]] / tau - max).exp() / z;
                    let delta = if k == j { 1.0 } else { 0.0 };
                    dsim[[i, k]] += weight * (p - delta) / tau;
                }
            }
        }
    }

    // Cosine backward: S_ab = <u_a, u_b> with u = z/|z|.
    let norms: Vec<f64> = batch.z.iter().map(|v| v.dot(v).sqrt()).collect();
    let units: Vec<Array1<f64>> = batch
        .z
        .iter()
        .zip(&norms)
        .map(|(v, &n)| v / n)
        .collect();
    let mut grads: Vec<Array1<f64>> = batch.z.iter().map(|v| Array1::zeros(v.len())).collect();
    for a in 0..n2 {
        for b in 0..n2 {
            if a == b {
                continue;
            }
            let g = dsim[[a, b]];
            if g == 0.0 {
                continue;
            }
            // dS_ab/dz_a = (u_b - S_ab u_a) / |z_a|, and symmetrically for
            // z_b; each ordered term moves both endpoints.
            let coeff = sims[[a, b]];
            let via_a = (&units[b] - &(&units[a] * coeff)) / norms[a];
            grads[a] = &grads[a] + &(&via_a * g);
            let via_b = (&units[a] - &(&units[b] * coeff)) / norms[b];
            grads[b] = &grads[b] + &(&via_b * g);
        }
    }
    (loss, grads)
}
