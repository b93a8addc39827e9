//! Central finite-difference checks of the tape's analytic gradients.
//!
//! Each check builds a function of random leaf inputs, reduces its output to
//! a scalar with a fixed random projection, and compares the backward pass
//! with `(f(x + h) - f(x - h)) / 2h`. The error is norm-wise:
//! `|a - n| / (|a| + |n|)` over every checked coordinate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::Bound;
use super::layers::{decay_hidden_var, lstm_step, ode_evolve, time2vec, OdeDynamics};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::transformer::{TransformerArch, TransformerModel};
use super::triage::{TriageArch, TriageModel, TriageVariant};
use super::TrainConfig;
use crate::trajectory::{Strategy, TriageElement, TriageElementKind};

const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;
/// Looser bound for paths through several Euler steps.
pub const ODE_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckResult {
    pub name: String,
    pub seed: u64,
    pub rel_error: f64,
    pub tolerance: f64,
    pub coords: usize,
}

impl GradCheckResult {
    pub fn passed(&self) -> bool {
        self.rel_error < self.tolerance
    }
}

type Build<'a> = dyn Fn(&mut Tape, &[Var]) -> Var + 'a;

/// Checks `build` at `inputs`; at most `max_coords` coordinates per input are
/// perturbed (chosen at random), all when `None`.
pub fn check(
    name: &str,
    seed: u64,
    inputs: &[Tensor],
    tolerance: f64,
    max_coords: Option<usize>,
    build: &Build,
) -> GradCheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let eval = |inputs: &[Tensor], proj: &[f64]| -> (Tape, Vec<Var>, Var) {
        let mut tape = Tape::new();
        let leaves: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
        let out = build(&mut tape, &leaves);
        let (r, c) = tape.shape(out);
        let pv = tape.constant(r, c, proj.to_vec());
        let prod = tape.mul(out, pv);
        let loss = tape.sum(prod);
        (tape, leaves, loss)
    };
    let out_len = {
        let mut tape = Tape::new();
        let leaves: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
        let out = build(&mut tape, &leaves);
        tape.value(out).len()
    };
    let proj: Vec<f64> = (0..out_len).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let (tape, leaves, loss) = eval(inputs, &proj);
    let grads = tape.backward(loss);
    let (mut diff, mut norm_a, mut norm_n) = (0.0, 0.0, 0.0);
    let mut coords = 0;
    let mut work = inputs.to_vec();
    for (k, leaf) in leaves.iter().enumerate() {
        let analytic = grads.of(*leaf).to_vec();
        let n = inputs[k].len();
        let idx: Vec<usize> = match max_coords {
            Some(m) if m < n => (0..m).map(|_| rng.gen_range(0..n)).collect(),
            _ => (0..n).collect(),
        };
        for i in idx {
            let orig = work[k].data[i];
            work[k].data[i] = orig + STEP;
            let (t, _, l) = eval(&work, &proj);
            let up = t.scalar(l);
            work[k].data[i] = orig - STEP;
            let (t, _, l) = eval(&work, &proj);
            let down = t.scalar(l);
            work[k].data[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            diff += (analytic[i] - numeric).powi(2);
            norm_a += analytic[i] * analytic[i];
            norm_n += numeric * numeric;
            coords += 1;
        }
    }
    let denom = norm_a.sqrt() + norm_n.sqrt();
    let rel_error = if denom == 0.0 { 0.0 } else { diff.sqrt() / denom };
    GradCheckResult {
        name: name.to_string(),
        seed,
        rel_error,
        tolerance,
        coords,
    }
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            // keep clear of the relu kink
            let x: f64 = rng.gen_range(-1.0..1.0);
            let x = if x.abs() < 0.05 { x.signum() * 0.05 + x } else { x };
            x * scale
        })
        .collect();
    Tensor::new(vec![rows, cols], data)
}

fn elements(rng: &mut ChaCha8Rng, n: usize) -> Vec<TriageElement> {
    let mut t = 0.0;
    (0..n)
        .map(|i| {
            t += rng.gen_range(1.0..40.0);
            TriageElement {
                tick: (t * 5.0) as _,
                t,
                x: rng.gen_range(0.0..90.0),
                y: rng.gen_range(0.0..50.0),
                severity: if rng.gen_bool(0.5) { 1.0 } else { 0.0 },
                victim: i as _,
                kind: TriageElementKind::Seen,
                label: Some(Strategy::from_index(rng.gen_range(0..2))),
            }
        })
        .collect()
}

/// Every tape operation and composite layer at one seed.
pub fn battery(seed: u64) -> Vec<GradCheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let tol = TOLERANCE;
    let (a, b) = (random(&mut rng, 3, 4, 1.0), random(&mut rng, 3, 4, 1.0));
    let row = random(&mut rng, 1, 4, 1.0);
    let m = random(&mut rng, 4, 2, 1.0);
    let sq = random(&mut rng, 4, 4, 2.0);

    out.push(check("add", seed, &[a.clone(), b.clone()], tol, None, &|t, v| t.add(v[0], v[1])));
    out.push(check("add_row", seed, &[a.clone(), row.clone()], tol, None, &|t, v| t.add_row(v[0], v[1])));
    out.push(check("sub", seed, &[a.clone(), b.clone()], tol, None, &|t, v| t.sub(v[0], v[1])));
    out.push(check("mul", seed, &[a.clone(), b.clone()], tol, None, &|t, v| t.mul(v[0], v[1])));
    out.push(check("mul_row", seed, &[a.clone(), row.clone()], tol, None, &|t, v| t.mul_row(v[0], v[1])));
    out.push(check("scale", seed, &[a.clone()], tol, None, &|t, v| t.scale(v[0], -1.7)));
    out.push(check("matmul", seed, &[a.clone(), m.clone()], tol, None, &|t, v| t.matmul(v[0], v[1])));
    out.push(check("transpose", seed, &[a.clone()], tol, None, &|t, v| t.transpose(v[0])));
    out.push(check("sigmoid", seed, &[a.clone()], tol, None, &|t, v| t.sigmoid(v[0])));
    out.push(check("tanh", seed, &[a.clone()], tol, None, &|t, v| t.tanh(v[0])));
    out.push(check("relu", seed, &[a.clone()], tol, None, &|t, v| t.relu(v[0])));
    out.push(check("exp", seed, &[a.clone()], tol, None, &|t, v| t.exp(v[0])));
    out.push(check("sin", seed, &[sq.clone()], tol, None, &|t, v| t.sin(v[0])));
    out.push(check("softmax_rows", seed, &[sq.clone()], tol, None, &|t, v| t.softmax_rows(v[0])));
    out.push(check("causal_softmax", seed, &[sq.clone()], tol, None, &|t, v| t.causal_softmax(v[0])));
    out.push(check("layer_norm_rows", seed, &[a.clone()], tol, None, &|t, v| t.layer_norm_rows(v[0])));
    out.push(check("concat_cols", seed, &[a.clone(), random(&mut rng, 3, 2, 1.0)], tol, None, &|t, v| {
        t.concat_cols(&[v[0], v[1]])
    }));
    out.push(check("slice_cols", seed, &[a.clone()], tol, None, &|t, v| t.slice_cols(v[0], 1, 2)));
    out.push(check("concat_rows", seed, &[a.clone(), row.clone()], tol, None, &|t, v| {
        t.concat_rows(&[v[0], v[1]])
    }));
    out.push(check("slice_rows", seed, &[a.clone()], tol, None, &|t, v| t.slice_rows(v[0], 1, 2)));
    out.push(check("gather_rows", seed, &[a.clone()], tol, None, &|t, v| t.gather_rows(v[0], &[2, 0, 2])));
    out.push(check("sum", seed, &[a.clone()], tol, None, &|t, v| t.sum(v[0])));
    out.push(check("mean", seed, &[a.clone()], tol, None, &|t, v| t.mean(v[0])));
    let labels: Vec<usize> = (0..3).map(|_| rng.gen_range(0..4)).collect();
    out.push(check("cross_entropy", seed, &[a.clone()], 1e-6, None, &|t, v| t.cross_entropy(v[0], &labels)));

    let t_s = rng.gen_range(0.0..5.0);
    let (omega, phi) = (random(&mut rng, 1, 5, 1.0), random(&mut rng, 1, 5, 1.0));
    out.push(check("time2vec", seed, &[omega, phi], tol, None, &|t, v| time2vec(t, t_s, v[0], v[1])));

    let (nx, nh) = (3, 4);
    let lstm_in = [
        random(&mut rng, 1, nx, 1.0),
        random(&mut rng, 1, nh, 1.0),
        random(&mut rng, 1, nh, 1.0),
        random(&mut rng, nx + nh, 4 * nh, 0.5),
        random(&mut rng, 1, 4 * nh, 0.5),
    ];
    out.push(check("lstm_step", seed, &lstm_in, tol, None, &|t, v| {
        let (h, c) = lstm_step(t, v[0], v[1], v[2], v[3], v[4]).expect("shapes agree");
        t.concat_cols(&[h, c])
    }));

    let dt = rng.gen_range(0.0..120.0);
    out.push(check("decay_hidden", seed, &[random(&mut rng, 1, nh, 1.0)], tol, None, &|t, v| {
        decay_hidden_var(t, v[0], dt, 60.0)
    }));

    let ode_in = [
        random(&mut rng, 1, nh, 1.0),
        random(&mut rng, nh, nh, 0.5),
        random(&mut rng, 1, nh, 0.5),
        random(&mut rng, nh, nh, 0.5),
        random(&mut rng, 1, nh, 0.5),
    ];
    let gap = rng.gen_range(0.1..2.0);
    out.push(check("ode_evolve", seed, &ode_in, ODE_TOLERANCE, None, &|t, v| {
        let d = OdeDynamics {
            w1: v[1],
            b1: v[2],
            w2: v[3],
            b2: v[4],
        };
        ode_evolve(t, v[0], gap, &d, 5).expect("finite")
    }));

    let cfg = TrainConfig {
        hidden_size: 4,
        time2vec_k: 3,
        ..TrainConfig::default()
    };
    let elems = elements(&mut rng, 4);
    for variant in TriageVariant::ALL {
        let model = TriageModel::new(TriageArch::from_config(variant, &cfg), seed, false);
        let tol = if variant == TriageVariant::Ode { ODE_TOLERANCE } else { TOLERANCE };
        let names = model.params.names().to_vec();
        out.push(check(
            &format!("triage_forward/{}", variant.as_str()),
            seed,
            &model.params.tensors,
            tol,
            Some(24),
            &|t, v| {
                let bound = Bound::from_vars(&names, v);
                model.forward(t, &bound, &elems).expect("non-empty")
            },
        ));
    }

    let tm = TransformerModel::new(TransformerArch::default(), seed);
    let len = rng.gen_range(1..=5);
    let tokens: Vec<usize> = (0..len).map(|_| rng.gen_range(0..26)).collect();
    let names = tm.params.names().to_vec();
    out.push(check("transformer_forward", seed, &tm.params.tensors, tol, Some(12), &|t, v| {
        let bound = Bound::from_vars(&names, v);
        tm.forward(t, &bound, &tokens).expect("valid tokens")
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes_one_seed() {
        for r in battery(1) {
            assert!(r.passed(), "{} rel err {:e}", r.name, r.rel_error);
        }
    }

    #[test]
    fn detects_wrong_gradient() {
        // the sine term is a constant on the tape, so its gradient is missing
        let x = Tensor::row(vec![0.3, -0.8]);
        let r = check("bogus", 0, &[x], TOLERANCE, None, &|t, v| {
            let s = t.scale(v[0], 1.0);
            let data: Vec<f64> = t.value(s).iter().map(|x| x.sin()).collect();
            let c = t.constant(1, 2, data);
            t.add(s, c)
        });
        assert!(!r.passed());
    }
}
