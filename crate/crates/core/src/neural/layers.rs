//! Recurrent building blocks recorded on a [`Tape`].

use super::tape::{Tape, Var};
use super::NeuralError;

/// Time2Vec embedding of `t`: a linear component followed by periodic ones,
/// `[w0 t + p0, sin(w1 t + p1), ..., sin(wk t + pk)]`. `omega` and `phi` are
/// `1 x (k + 1)` rows.
pub fn time2vec(tape: &mut Tape, t: f64, omega: Var, phi: Var) -> Var {
    let (_, n) = tape.shape(omega);
    let scaled = tape.scale(omega, t);
    let lin = tape.add(scaled, phi);
    if n == 1 {
        return lin;
    }
    let head = tape.slice_cols(lin, 0, 1);
    let rest = tape.slice_cols(lin, 1, n - 1);
    let periodic = tape.sin(rest);
    tape.concat_cols(&[head, periodic])
}

/// One LSTM step. `w` is `(in + hidden) x 4 hidden` with gate blocks in the
/// order input, forget, candidate, output; `b` is `1 x 4 hidden`.
pub fn lstm_step(
    tape: &mut Tape,
    x: Var,
    h: Var,
    c: Var,
    w: Var,
    b: Var,
) -> Result<(Var, Var), NeuralError> {
    let (_, nx) = tape.shape(x);
    let (_, nh) = tape.shape(h);
    if tape.shape(c) != (1, nh) {
        return Err(NeuralError::Shape(format!(
            "cell state {:?} does not match hidden 1 x {nh}",
            tape.shape(c)
        )));
    }
    if tape.shape(w) != (nx + nh, 4 * nh) || tape.shape(b) != (1, 4 * nh) {
        return Err(NeuralError::Shape(format!(
            "lstm weights {:?}/{:?} do not fit input {nx} and hidden {nh}",
            tape.shape(w),
            tape.shape(b)
        )));
    }
    let xh = tape.concat_cols(&[x, h]);
    let z = tape.matmul(xh, w);
    let z = tape.add(z, b);
    let zi = tape.slice_cols(z, 0, nh);
    let zf = tape.slice_cols(z, nh, nh);
    let zg = tape.slice_cols(z, 2 * nh, nh);
    let zo = tape.slice_cols(z, 3 * nh, nh);
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let g = tape.tanh(zg);
    let o = tape.sigmoid(zo);
    let keep = tape.mul(f, c);
    let write = tape.mul(i, g);
    let c_next = tape.add(keep, write);
    let squashed = tape.tanh(c_next);
    let h_next = tape.mul(o, squashed);
    Ok((h_next, c_next))
}

/// Multiplier `2^(-dt / half_life)`.
pub fn decay_factor(dt: f64, half_life: f64) -> f64 {
    (-dt / half_life).exp2()
}

/// Exponential decay of a hidden state across a gap of `dt` seconds.
pub fn decay_hidden(h: &[f64], dt: f64, half_life: f64) -> Vec<f64> {
    assert!(dt >= 0.0, "gap must be non-negative");
    let f = decay_factor(dt, half_life);
    h.iter().map(|x| x * f).collect()
}

/// [`decay_hidden`] on the tape.
pub fn decay_hidden_var(tape: &mut Tape, h: Var, dt: f64, half_life: f64) -> Var {
    assert!(dt >= 0.0, "gap must be non-negative");
    tape.scale(h, decay_factor(dt, half_life))
}

/// Weights of the dynamics `g(h) = tanh(h w1 + b1) w2 + b2`.
#[derive(Clone, Copy, Debug)]
pub struct OdeDynamics {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// Explicit Euler integration of `dh/ds = g(h)` over `dt` in `steps` equal
/// steps.
pub fn ode_evolve(
    tape: &mut Tape,
    h: Var,
    dt: f64,
    dynamics: &OdeDynamics,
    steps: usize,
) -> Result<Var, NeuralError> {
    assert!(dt >= 0.0, "gap must be non-negative");
    assert!(steps >= 1, "at least one Euler step");
    if dt == 0.0 {
        return Ok(h);
    }
    let step = dt / steps as f64;
    let mut h = h;
    for _ in 0..steps {
        let a = tape.matmul(h, dynamics.w1);
        let a = tape.add(a, dynamics.b1);
        let a = tape.tanh(a);
        let g = tape.matmul(a, dynamics.w2);
        let g = tape.add(g, dynamics.b2);
        let dh = tape.scale(g, step);
        h = tape.add(h, dh);
        if tape.value(h).iter().any(|x| !x.is_finite()) {
            return Err(NeuralError::Divergence("non-finite state during ODE integration".into()));
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_examples() {
        let h = [1.0, -2.0, 0.5];
        assert_eq!(decay_hidden(&h, 0.0, 60.0), h.to_vec());
        assert_eq!(decay_hidden(&h, 60.0, 60.0), vec![0.5, -1.0, 0.25]);
        assert_eq!(decay_hidden(&h, 120.0, 60.0), vec![0.25, -0.5, 0.125]);
    }

    #[test]
    fn zero_lstm_outputs_zero() {
        let mut t = Tape::new();
        let x = t.constant(1, 3, vec![0.4, -1.0, 2.0]);
        let h = t.constant(1, 2, vec![0.3, 0.1]);
        let c = t.constant(1, 2, vec![0.0, 0.0]);
        let w = t.constant(5, 8, vec![0.0; 40]);
        let b = t.constant(1, 8, vec![0.0; 8]);
        let (h2, c2) = lstm_step(&mut t, x, h, c, w, b).unwrap();
        assert_eq!(t.value(h2), &[0.0, 0.0]);
        assert_eq!(t.value(c2), &[0.0, 0.0]);
    }

    #[test]
    fn lstm_shape_errors() {
        let mut t = Tape::new();
        let x = t.constant(1, 3, vec![0.0; 3]);
        let h = t.constant(1, 2, vec![0.0; 2]);
        let c = t.constant(1, 2, vec![0.0; 2]);
        let w = t.constant(4, 8, vec![0.0; 32]);
        let b = t.constant(1, 8, vec![0.0; 8]);
        assert!(matches!(lstm_step(&mut t, x, h, c, w, b), Err(NeuralError::Shape(_))));
    }

    #[test]
    fn time2vec_zero_params() {
        let mut t = Tape::new();
        let w = t.constant(1, 4, vec![0.0; 4]);
        let p = t.constant(1, 4, vec![0.0; 4]);
        let e = time2vec(&mut t, 123.0, w, p);
        assert_eq!(t.value(e), &[0.0; 4]);
    }
}
