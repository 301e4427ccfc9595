//! Multi-label scoring models: a linear map `h(x) = xᵀW` and a small MLP
//! whose last layer is always an identity-activated linear map, so raw
//! margins are exposed everywhere. A label is predicted positive when its
//! margin is strictly positive, and an instance is correct on label j when
//! `y_j * h_j(x) > 0`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, spectral_norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative evaluated from the pre-activation value.
    pub fn deriv(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
        }
    }

    /// Lipschitz constant of the activation.
    pub fn rho(&self) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0,
            Activation::Sigmoid => 0.25,
        }
    }

    pub fn tag(&self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Activation> {
        match tag {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Sigmoid),
            _ => Err(Error::Format(format!("unknown activation tag {}", tag))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn from_name(name: &str) -> Result<Activation> {
        match name {
            "identity" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            _ => Err(Error::InvalidArgument(format!("unknown activation `{}`", name))),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `h(x) = xᵀW`, weights `d x m`, one column per label, no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    w: Array2<f64>,
}

impl LinearModel {
    pub fn new(w: Array2<f64>) -> Result<LinearModel> {
        let (d, m) = w.dim();
        if d == 0 || m == 0 {
            return Err(Error::InvalidArgument(format!(
                "weight matrix must be non-empty, got {}x{}",
                d, m
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("weight matrix has non-finite entries".into()));
        }
        Ok(LinearModel { w })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn d(&self) -> usize {
        self.w.nrows()
    }

    pub fn m(&self) -> usize {
        self.w.ncols()
    }

    pub fn scores(&self, x: &Array1<f64>) -> Array1<f64> {
        x.dot(&self.w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer {
    pub a: Array2<f64>,
    pub act: Activation,
}

/// Feed-forward chain `H_i = g_i(H_{i-1} A_i)`; the constructor rejects a
/// non-identity activation on the last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<MlpLayer>,
}

impl MlpModel {
    pub fn new(layers: Vec<MlpLayer>) -> Result<MlpModel> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("mlp needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            let (rows, cols) = layer.a.dim();
            if rows == 0 || cols == 0 {
                return Err(Error::InvalidArgument(format!("layer {} is empty", i)));
            }
            if layer.a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("layer {} has non-finite entries", i)));
            }
            if i + 1 < layers.len() && cols != layers[i + 1].a.nrows() {
                return Err(Error::InvalidArgument(format!(
                    "layer {} outputs {} units but layer {} expects {}",
                    i,
                    cols,
                    i + 1,
                    layers[i + 1].a.nrows()
                )));
            }
        }
        if layers.last().unwrap().act != Activation::Identity {
            return Err(Error::InvalidArgument(
                "last layer must use the identity activation".into(),
            ));
        }
        Ok(MlpModel { layers })
    }

    pub fn layers(&self) -> &[MlpLayer] {
        &self.layers
    }

    pub fn d(&self) -> usize {
        self.layers[0].a.nrows()
    }

    pub fn m(&self) -> usize {
        self.layers.last().unwrap().a.ncols()
    }

    pub fn scores(&self, x: &Array1<f64>) -> Array1<f64> {
        let mut h = x.clone();
        for layer in &self.layers {
            let pre = h.dot(&layer.a);
            h = pre.mapv(|z| layer.act.apply(z));
        }
        h
    }

    /// Forward pass keeping every pre-activation, for backprop.
    pub fn forward_trace(&self, x: &Array1<f64>) -> (Vec<Array1<f64>>, Array1<f64>) {
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let pre = h.dot(&layer.a);
            h = pre.mapv(|z| layer.act.apply(z));
            pres.push(pre);
        }
        (pres, h)
    }

    /// Backpropagates an output cotangent to an input cotangent.
    fn pull_back(&self, pres: &[Array1<f64>], out_grad: &Array1<f64>) -> Array1<f64> {
        let mut v = out_grad.clone();
        for (layer, pre) in self.layers.iter().zip(pres.iter()).rev() {
            let v_pre = Array1::from_shape_fn(v.len(), |k| v[k] * layer.act.deriv(pre[k]));
            v = layer.a.dot(&v_pre);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn d(&self) -> usize {
        match self {
            Model::Linear(m) => m.d(),
            Model::Mlp(m) => m.d(),
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Model::Linear(m) => m.m(),
            Model::Mlp(m) => m.m(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Linear(_) => "linear",
            Model::Mlp(_) => "mlp",
        }
    }

    pub fn as_linear(&self) -> Option<&LinearModel> {
        match self {
            Model::Linear(m) => Some(m),
            Model::Mlp(_) => None,
        }
    }

    /// Raw margins, one per label.
    pub fn scores(&self, x: &Array1<f64>) -> Array1<f64> {
        match self {
            Model::Linear(m) => m.scores(x),
            Model::Mlp(m) => m.scores(x),
        }
    }

    /// Gradient of the label-`j` margin with respect to the input.
    pub fn score_grad(&self, x: &Array1<f64>, j: usize) -> Result<Array1<f64>> {
        if j >= self.m() {
            return Err(Error::InvalidArgument(format!(
                "label {} out of range (m={})",
                j,
                self.m()
            )));
        }
        if x.len() != self.d() {
            return Err(Error::InvalidArgument(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.d()
            )));
        }
        match self {
            Model::Linear(m) => Ok(m.weights().column(j).to_owned()),
            Model::Mlp(m) => {
                let (pres, _) = m.forward_trace(x);
                let mut e = Array1::zeros(self.m());
                e[j] = 1.0;
                Ok(m.pull_back(&pres, &e))
            }
        }
    }

    /// Gradient of `sum_j coeffs[j] * h_j(x)` with respect to `x`. One
    /// backward pass regardless of how many coefficients are nonzero.
    pub fn weighted_score_grad(&self, x: &Array1<f64>, coeffs: &Array1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.d() || coeffs.len() != self.m() {
            return Err(Error::InvalidArgument(format!(
                "weighted gradient wants input len {} and coeff len {}, got {} and {}",
                self.d(),
                self.m(),
                x.len(),
                coeffs.len()
            )));
        }
        match self {
            Model::Linear(m) => Ok(m.weights().dot(coeffs)),
            Model::Mlp(m) => {
                let (pres, _) = m.forward_trace(x);
                Ok(m.pull_back(&pres, coeffs))
            }
        }
    }

    /// All margin gradients as a `d x m` matrix (column j is grad of h_j).
    pub fn score_jacobian(&self, x: &Array1<f64>) -> Result<Array2<f64>> {
        if x.len() != self.d() {
            return Err(Error::InvalidArgument(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.d()
            )));
        }
        match self {
            Model::Linear(m) => Ok(m.weights().clone()),
            Model::Mlp(m) => {
                let (pres, _) = m.forward_trace(x);
                let mut jac = Array2::zeros((self.d(), self.m()));
                for j in 0..self.m() {
                    let mut e = Array1::zeros(self.m());
                    e[j] = 1.0;
                    let g = m.pull_back(&pres, &e);
                    jac.column_mut(j).assign(&g);
                }
                Ok(jac)
            }
        }
    }

    /// Score-map Lipschitz capacity: `max(||W||, 1)` for the linear model,
    /// `max(1, prod_i rho_i ||A_i||)` for the MLP.
    pub fn lipschitz_capacity(&self) -> f64 {
        match self {
            Model::Linear(m) => spectral_norm(m.weights(), 1e-12, 10_000).value.max(1.0),
            Model::Mlp(m) => {
                let mut prod = 1.0;
                for layer in m.layers() {
                    prod *= layer.act.rho() * spectral_norm(&layer.a, 1e-12, 10_000).value;
                }
                prod.max(1.0)
            }
        }
    }

    /// Numerical rank of the weight matrix (linear) or per-layer ranks (MLP).
    pub fn weight_ranks(&self, tol: f64) -> Vec<usize> {
        match self {
            Model::Linear(m) => vec![numerical_rank(m.weights(), tol)],
            Model::Mlp(m) => m.layers().iter().map(|l| numerical_rank(&l.a, tol)).collect(),
        }
    }
}

/// Per-depth contraction constants for an L-layer MLP, reverse-indexed so
/// `C[0]` covers the last layer:
/// `C_1 = rho_L`, `C_i = (prod_{j=L-i+1..L} rho_j) * (prod_{j=L+2-i..L} ||A_j||)`.
pub fn layer_constants(mlp: &MlpModel) -> Vec<f64> {
    let layers = mlp.layers();
    let l = layers.len();
    let rho: Vec<f64> = layers.iter().map(|la| la.act.rho()).collect();
    let norms: Vec<f64> = layers.iter().map(|la| spectral_norm(&la.a, 1e-12, 10_000).value).collect();
    (1..=l)
        .map(|i| {
            let mut c = 1.0;
            for j in (l - i + 1)..=l {
                c *= rho[j - 1];
            }
            for j in (l + 2 - i).max(1)..=l {
                c *= norms[j - 1];
            }
            c
        })
        .collect()
}

/// Multi-label losses over raw margins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Count of labels with `y_j h_j <= 0`.
    ZeroOne,
    /// `||y - h||_2`.
    Lse,
    /// `sum_j max(0, 1 - y_j h_j)^2`.
    SquaredHinge,
    /// `sum_j ln(1 + exp(-y_j h_j))`.
    Logistic,
}

impl Loss {
    pub fn value(&self, y: &Array1<f64>, h: &Array1<f64>) -> f64 {
        match self {
            Loss::ZeroOne => y.iter().zip(h.iter()).filter(|(y, h)| *y * *h <= 0.0).count() as f64,
            Loss::Lse => {
                y.iter().zip(h.iter()).map(|(y, h)| (y - h) * (y - h)).sum::<f64>().sqrt()
            }
            Loss::SquaredHinge => y
                .iter()
                .zip(h.iter())
                .map(|(y, h)| {
                    let s = (1.0 - y * h).max(0.0);
                    s * s
                })
                .sum(),
            Loss::Logistic => y.iter().zip(h.iter()).map(|(y, h)| softplus(-y * h)).sum(),
        }
    }

    /// Gradient with respect to the margins; `None` for the zero-one loss.
    pub fn grad_scores(&self, y: &Array1<f64>, h: &Array1<f64>) -> Option<Array1<f64>> {
        match self {
            Loss::ZeroOne => None,
            Loss::Lse => {
                let diff = h - y;
                let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    Some(Array1::zeros(y.len()))
                } else {
                    Some(diff.mapv(|v| v / norm))
                }
            }
            Loss::SquaredHinge => Some(Array1::from_shape_fn(y.len(), |j| {
                -2.0 * y[j] * (1.0 - y[j] * h[j]).max(0.0)
            })),
            Loss::Logistic => {
                Some(Array1::from_shape_fn(y.len(), |j| -y[j] * sigmoid(-y[j] * h[j])))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Loss::ZeroOne => "zero_one",
            Loss::Lse => "lse",
            Loss::SquaredHinge => "squared_hinge",
            Loss::Logistic => "logistic",
        }
    }

    pub fn from_name(name: &str) -> Result<Loss> {
        match name {
            "zero_one" => Ok(Loss::ZeroOne),
            "lse" => Ok(Loss::Lse),
            "squared_hinge" => Ok(Loss::SquaredHinge),
            "logistic" => Ok(Loss::Logistic),
            _ => Err(Error::InvalidArgument(format!("unknown loss `{}`", name))),
        }
    }
}

fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else if t < -30.0 {
        t.exp()
    } else {
        t.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn two_layer(act: Activation) -> MlpModel {
        let a1 = array![[0.5, -0.3], [0.2, 0.7], [-0.1, 0.4]];
        let a2 = array![[1.0, -2.0], [0.5, 0.25]];
        MlpModel::new(vec![
            MlpLayer { a: a1, act },
            MlpLayer { a: a2, act: Activation::Identity },
        ])
        .unwrap()
    }

    #[test]
    fn linear_scores_and_grads() {
        let w = array![[1.0, 0.0], [0.0, 2.0], [3.0, -1.0]];
        let model = Model::Linear(LinearModel::new(w).unwrap());
        let x = array![1.0, 2.0, 0.5];
        let h = model.scores(&x);
        assert_abs_diff_eq!(h[0], 2.5);
        assert_abs_diff_eq!(h[1], 3.5);
        let g1 = model.score_grad(&x, 1).unwrap();
        assert_eq!(g1.to_vec(), vec![0.0, 2.0, -1.0]);
        assert!(model.score_grad(&x, 2).is_err());
    }

    #[test]
    fn tanh_mlp_matches_hand_computed_values() {
        let model = Model::Mlp(two_layer(Activation::Tanh));
        let x = array![0.3, -0.2, 0.9];
        let h = model.scores(&x);
        assert_abs_diff_eq!(h[0], 0.08463362556296011, epsilon = 1e-14);
        assert_abs_diff_eq!(h[1], -0.00767652161834722, epsilon = 1e-14);
        let g0 = model.score_grad(&x, 0).unwrap();
        let g1 = model.score_grad(&x, 1).unwrap();
        let want0 = [0.3523067634520748, 0.5440710310232338, 0.09669770916131354];
        let want1 = [-1.07334675157708, -0.22776453780963002, 0.29824888124128024];
        for k in 0..3 {
            assert_abs_diff_eq!(g0[k], want0[k], epsilon = 1e-13);
            assert_abs_diff_eq!(g1[k], want1[k], epsilon = 1e-13);
        }
    }

    #[test]
    fn sigmoid_mlp_matches_hand_computed_values() {
        let model = Model::Mlp(two_layer(Activation::Sigmoid));
        let x = array![0.3, -0.2, 0.9];
        let h = model.scores(&x);
        assert_abs_diff_eq!(h[0], 0.7712269865336592, epsilon = 1e-14);
        assert_abs_diff_eq!(h[1], -0.8768860900831699, epsilon = 1e-14);
        let g0 = model.score_grad(&x, 0).unwrap();
        let want0 = [0.0876454931337484, 0.13712635163223574, 0.02479184343272639];
        for k in 0..3 {
            assert_abs_diff_eq!(g0[k], want0[k], epsilon = 1e-13);
        }
    }

    #[test]
    fn jacobian_columns_match_score_grad() {
        let model = Model::Mlp(two_layer(Activation::Tanh));
        let x = array![0.1, 0.4, -0.6];
        let jac = model.score_jacobian(&x).unwrap();
        for j in 0..2 {
            let g = model.score_grad(&x, j).unwrap();
            for k in 0..3 {
                assert_abs_diff_eq!(jac[[k, j]], g[k], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let a1 = Array2::from_shape_fn((4, 3), |_| rng.sample::<f64, _>(StandardNormal));
            let a2 = Array2::from_shape_fn((3, 2), |_| rng.sample::<f64, _>(StandardNormal));
            let model = Model::Mlp(
                MlpModel::new(vec![
                    MlpLayer { a: a1, act: Activation::Tanh },
                    MlpLayer { a: a2, act: Activation::Identity },
                ])
                .unwrap(),
            );
            let x = Array1::from_shape_fn(4, |_| rng.sample::<f64, _>(StandardNormal));
            let step = 1e-5;
            for j in 0..2 {
                let g = model.score_grad(&x, j).unwrap();
                for k in 0..4 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += step;
                    xm[k] -= step;
                    let fd = (model.scores(&xp)[j] - model.scores(&xm)[j]) / (2.0 * step);
                    assert_abs_diff_eq!(g[k], fd, epsilon = 1e-7 * (1.0 + fd.abs()));
                }
            }
        }
    }

    #[test]
    fn constructor_rejects_bad_shapes_and_activations() {
        let a1 = array![[1.0, 2.0]];
        let a2 = array![[1.0], [1.0], [1.0]];
        assert!(MlpModel::new(vec![
            MlpLayer { a: a1.clone(), act: Activation::Tanh },
            MlpLayer { a: a2, act: Activation::Identity },
        ])
        .is_err());
        assert!(MlpModel::new(vec![MlpLayer { a: a1, act: Activation::Tanh }]).is_err());
        assert!(MlpModel::new(vec![]).is_err());
        assert!(LinearModel::new(Array2::zeros((0, 2))).is_err());
    }

    #[test]
    fn capacity_floors_at_one() {
        let tiny = Model::Linear(LinearModel::new(array![[0.01, 0.0], [0.0, 0.01]]).unwrap());
        assert_abs_diff_eq!(tiny.lipschitz_capacity(), 1.0);
        let w = array![[3.0, 0.0], [4.0, 5.0]];
        let model = Model::Linear(LinearModel::new(w).unwrap());
        assert_abs_diff_eq!(model.lipschitz_capacity(), 6.70820393249937, epsilon = 1e-9);
    }

    #[test]
    fn mlp_capacity_multiplies_contractions() {
        // sigmoid layer with norm 4, identity layer with norm 3:
        // 0.25*4 * 1*3 = 3.
        let model = Model::Mlp(
            MlpModel::new(vec![
                MlpLayer { a: array![[4.0]], act: Activation::Sigmoid },
                MlpLayer { a: array![[3.0]], act: Activation::Identity },
            ])
            .unwrap(),
        );
        assert_abs_diff_eq!(model.lipschitz_capacity(), 3.0, epsilon = 1e-10);
    }

    #[test]
    fn layer_constants_reverse_telescoping() {
        // L=3, rho=(0.25, 1, 1), |A2|=2, |A3|=3 -> C = (1, 3, 1.5).
        let mlp = MlpModel::new(vec![
            MlpLayer { a: array![[5.0]], act: Activation::Sigmoid },
            MlpLayer { a: array![[2.0]], act: Activation::Tanh },
            MlpLayer { a: array![[3.0]], act: Activation::Identity },
        ])
        .unwrap();
        let c = layer_constants(&mlp);
        assert_eq!(c.len(), 3);
        assert_abs_diff_eq!(c[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(c[1], 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(c[2], 1.5, epsilon = 1e-10);
    }

    #[test]
    fn layer_constants_two_layer_case() {
        // L=2, rho=(1,1), |A2|=3 -> C = (1, 3).
        let mlp = MlpModel::new(vec![
            MlpLayer { a: array![[1.0, 0.0], [0.0, 1.0]], act: Activation::Tanh },
            MlpLayer { a: array![[3.0, 0.0], [0.0, 1.0]], act: Activation::Identity },
        ])
        .unwrap();
        let c = layer_constants(&mlp);
        assert_abs_diff_eq!(c[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(c[1], 3.0, epsilon = 1e-10);
    }

    #[test]
    fn loss_values_match_hand_computations() {
        let y = array![1.0, -1.0, 1.0];
        let h = array![0.2, 0.4, 2.0];
        assert_abs_diff_eq!(Loss::Lse.value(&y, &h), 1.8973665961010275, epsilon = 1e-14);
        assert_abs_diff_eq!(Loss::ZeroOne.value(&y, &h), 1.0);
        let sq = 0.8f64.powi(2) + 1.4f64.powi(2);
        assert_abs_diff_eq!(Loss::SquaredHinge.value(&y, &h), sq, epsilon = 1e-12);
    }

    #[test]
    fn logistic_loss_is_stable_for_large_margins() {
        let y = array![1.0, -1.0];
        let h = array![1000.0, 1000.0];
        let v = Loss::Logistic.value(&y, &h);
        assert!(v.is_finite());
        assert_abs_diff_eq!(v, 1000.0, epsilon = 1e-9);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let y = array![1.0, -1.0, 1.0];
        let h = array![0.3, -0.8, 1.2];
        for loss in [Loss::Lse, Loss::SquaredHinge, Loss::Logistic] {
            let g = loss.grad_scores(&y, &h).unwrap();
            for j in 0..3 {
                let mut hp = h.clone();
                let mut hm = h.clone();
                hp[j] += 1e-6;
                hm[j] -= 1e-6;
                let fd = (loss.value(&y, &hp) - loss.value(&y, &hm)) / 2e-6;
                assert_abs_diff_eq!(g[j], fd, epsilon = 1e-6);
            }
        }
        assert!(Loss::ZeroOne.grad_scores(&y, &h).is_none());
    }

    #[test]
    fn lse_gradient_at_zero_residual_is_zero() {
        let y = array![1.0, -1.0];
        let g = Loss::Lse.grad_scores(&y, &y.clone()).unwrap();
        assert_eq!(g.to_vec(), vec![0.0, 0.0]);
    }
}
