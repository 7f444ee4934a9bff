use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scene::Scene;
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::geometry::Detection;
use crate::loss::sigmoid;

/// Per-candidate outputs: objectness logit and four box offsets.
pub const OUTPUT_DIM: usize = 5;

/// Refined boxes narrower than this fall back to the reference extent.
const MIN_EXTENT: f64 = 1e-4;

/// Fully connected layer; `weights` is row-major `out_dim x in_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn random(in_dim: usize, out_dim: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("positive std");
        Self {
            in_dim,
            out_dim,
            weights: (0..in_dim * out_dim).map(|_| normal.sample(rng)).collect(),
            bias: vec![0.0; out_dim],
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.in_dim).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.bias)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Three dense layers `D -> H -> H -> 5` with ReLU between them.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    pub layers: Vec<Dense>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Clone, Debug, Default)]
pub(crate) struct Cache {
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

impl ToyModel {
    /// He-initialized hidden layers, small output layer, zero biases.
    pub fn new(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let he = |n: usize| (2.0 / n as f64).sqrt();
        Self {
            layers: vec![
                Dense::random(input_dim, hidden, he(input_dim), &mut rng),
                Dense::random(hidden, hidden, he(hidden), &mut rng),
                Dense::random(hidden, OUTPUT_DIM, 0.01, &mut rng),
            ],
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            layers: vec![
                Dense::zeros(input_dim, hidden),
                Dense::zeros(hidden, hidden),
                Dense::zeros(hidden, OUTPUT_DIM),
            ],
        }
    }

    /// Zero model with the same shape.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[0].out_dim
    }

    /// Layer count, chained shapes, output width and finite weights.
    pub fn check(&self) -> Result<()> {
        if self.layers.len() != 3 {
            return Err(Error::InvalidParameter(format!(
                "expected 3 layers, got {}",
                self.layers.len()
            )));
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::ShapeMismatch {
                    expected: pair[0].out_dim,
                    actual: pair[1].in_dim,
                });
            }
        }
        for l in &self.layers {
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::ShapeMismatch {
                    expected: l.in_dim * l.out_dim + l.out_dim,
                    actual: l.weights.len() + l.bias.len(),
                });
            }
        }
        let out = self.layers[2].out_dim;
        if out != OUTPUT_DIM {
            return Err(Error::ShapeMismatch {
                expected: OUTPUT_DIM,
                actual: out,
            });
        }
        if !self.params().all(|w| w.is_finite()) {
            return Err(Error::NonFinite("model weight"));
        }
        Ok(())
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.params_mut())
    }

    pub fn param_count(&self) -> usize {
        self.params().count()
    }

    pub(crate) fn forward_cached(&self, x: &[f64], cache: &mut Cache) -> [f64; OUTPUT_DIM] {
        let [l1, l2, l3] = &self.layers[..] else {
            unreachable!("model checked to have 3 layers")
        };
        cache.input.clear();
        cache.input.extend_from_slice(x);
        cache.h1.resize(l1.out_dim, 0.0);
        cache.h2.resize(l2.out_dim, 0.0);
        l1.apply(x, &mut cache.h1);
        cache.h1.iter_mut().for_each(|v| *v = v.max(0.0));
        l2.apply(&cache.h1, &mut cache.h2);
        cache.h2.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut out = [0.0; OUTPUT_DIM];
        l3.apply(&cache.h2, &mut out);
        out
    }

    /// Accumulates into `grads` the parameter gradient for output gradient
    /// `dout` at the activations in `cache`.
    pub(crate) fn backward(&self, cache: &Cache, dout: &[f64; OUTPUT_DIM], grads: &mut ToyModel) {
        let (l2, l3) = (&self.layers[1], &self.layers[2]);
        let dh2 = accumulate_layer(&mut grads.layers[2], l3, &cache.h2, dout);
        let dz2: Vec<f64> = dh2
            .iter()
            .zip(&cache.h2)
            .map(|(d, h)| if *h > 0.0 { *d } else { 0.0 })
            .collect();
        let dh1 = accumulate_layer(&mut grads.layers[1], l2, &cache.h1, &dz2);
        let dz1: Vec<f64> = dh1
            .iter()
            .zip(&cache.h1)
            .map(|(d, h)| if *h > 0.0 { *d } else { 0.0 })
            .collect();
        let g0 = &mut grads.layers[0];
        for (o, d) in dz1.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            g0.bias[o] += d;
            for (w, x) in g0.weights[o * g0.in_dim..(o + 1) * g0.in_dim]
                .iter_mut()
                .zip(&cache.input)
            {
                *w += d * x;
            }
        }
    }
}

/// Adds the weight/bias gradient of `layer` into `grad` and returns the
/// gradient with respect to the layer input.
fn accumulate_layer(grad: &mut Dense, layer: &Dense, input: &[f64], dout: &[f64]) -> Vec<f64> {
    let mut dinput = vec![0.0; layer.in_dim];
    for (o, d) in dout.iter().enumerate() {
        if *d == 0.0 {
            continue;
        }
        grad.bias[o] += d;
        let row = o * layer.in_dim..(o + 1) * layer.in_dim;
        for ((gw, w), (x, di)) in grad.weights[row.clone()]
            .iter_mut()
            .zip(&layer.weights[row])
            .zip(input.iter().zip(dinput.iter_mut()))
        {
            *gw += d * x;
            *di += d * w;
        }
    }
    dinput
}

/// Applies offsets (in units of the reference width/height) to a reference
/// box and clips to the unit square.
///
/// The mask flags coordinates that passed through unclipped, i.e. where the
/// refined coordinate is differentiable in its offset.
pub(crate) fn refine_box(reference: &BBox, offsets: &[f64]) -> (BBox, [bool; 4]) {
    let (w, h) = (reference.width(), reference.height());
    let scale = [w, h, w, h];
    let r = reference.coords();
    let mut c = [0.0; 4];
    let mut mask = [true; 4];
    for i in 0..4 {
        let raw = r[i] + offsets[i] * scale[i];
        c[i] = raw.clamp(0.0, 1.0);
        mask[i] = c[i] == raw;
    }
    for (lo, hi) in [(0, 2), (1, 3)] {
        if c[hi] - c[lo] < MIN_EXTENT {
            c[lo] = r[lo];
            c[hi] = r[hi];
            mask[lo] = false;
            mask[hi] = false;
        }
    }
    (BBox::from_coords(c), mask)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateOutput {
    pub logit: f64,
    pub bbox: BBox,
}

fn check_shapes(model: &ToyModel, scene: &Scene) -> Result<()> {
    model.check()?;
    for f in &scene.candidate_features {
        if f.len() != model.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: model.input_dim(),
                actual: f.len(),
            });
        }
    }
    if scene.candidate_features.len() != scene.candidate_boxes.len() {
        return Err(Error::ShapeMismatch {
            expected: scene.candidate_boxes.len(),
            actual: scene.candidate_features.len(),
        });
    }
    Ok(())
}

/// One `(logit, refined box)` per candidate, in candidate order.
pub fn forward(model: &ToyModel, scene: &Scene) -> Result<Vec<CandidateOutput>> {
    check_shapes(model, scene)?;
    let mut cache = Cache::default();
    Ok(scene
        .candidate_features
        .iter()
        .zip(&scene.candidate_boxes)
        .map(|(x, r)| {
            let out = model.forward_cached(x, &mut cache);
            CandidateOutput {
                logit: out[0],
                bbox: refine_box(r, &out[1..]).0,
            }
        })
        .collect())
}

/// Every candidate as a detection with `confidence = sigmoid(logit)`.
pub fn predict(model: &ToyModel, scene: &Scene) -> Result<Vec<Detection>> {
    Ok(forward(model, scene)?
        .into_iter()
        .map(|o| Detection::new(o.bbox, sigmoid(o.logit)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::scene::{generate_scene, SceneConfig, FEATURE_DIM};

    fn scene() -> Scene {
        generate_scene(&SceneConfig::default(), 3).unwrap()
    }

    #[test]
    fn one_output_per_candidate() {
        let m = ToyModel::new(FEATURE_DIM, 32, 1);
        assert_eq!(forward(&m, &scene()).unwrap().len(), 64);
        assert_eq!(predict(&m, &scene()).unwrap().len(), 64);
    }

    #[test]
    fn zero_model_returns_reference_boxes() {
        let sc = scene();
        let out = forward(&ToyModel::zeros(FEATURE_DIM, 32), &sc).unwrap();
        for (o, r) in out.iter().zip(&sc.candidate_boxes) {
            assert_eq!(o.logit, 0.0);
            assert_eq!(o.bbox, *r);
        }
        let dets = predict(&ToyModel::zeros(FEATURE_DIM, 32), &sc).unwrap();
        assert!(dets.iter().all(|d| d.confidence == 0.5));
    }

    #[test]
    fn candidates_are_independent() {
        let m = ToyModel::new(FEATURE_DIM, 32, 5);
        let sc = scene();
        let base = forward(&m, &sc).unwrap();
        let mut changed = sc.clone();
        changed.candidate_features[10][3] += 1.0;
        let after = forward(&m, &changed).unwrap();
        for (i, (a, b)) in base.iter().zip(&after).enumerate() {
            if i != 10 {
                assert_eq!(a, b);
            }
        }
        assert_ne!(base[10], after[10]);
    }

    #[test]
    fn confidence_is_monotone_in_logit() {
        let m = ToyModel::new(FEATURE_DIM, 32, 8);
        let sc = scene();
        let out = forward(&m, &sc).unwrap();
        let dets = predict(&m, &sc).unwrap();
        for i in 0..out.len() {
            for j in 0..out.len() {
                if out[i].logit > out[j].logit {
                    assert!(dets[i].confidence >= dets[j].confidence);
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let m = ToyModel::new(FEATURE_DIM + 1, 32, 1);
        assert!(matches!(
            forward(&m, &scene()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn refine_box_clips_and_stays_valid() {
        let r = BBox::new(0.0, 0.0, 0.125, 0.125);
        let (b, mask) = refine_box(&r, &[-1.0, 0.1, 0.2, 0.0]);
        assert_eq!(b.x_min, 0.0);
        assert_eq!(mask, [false, true, true, true]);
        // Collapsed x extent falls back to the reference.
        let (b, mask) = refine_box(&r, &[2.0, 0.0, -2.0, 0.0]);
        assert!(b.is_valid());
        assert_eq!((b.x_min, b.x_max), (0.0, 0.125));
        assert!(!mask[0] && !mask[2]);
    }
}
