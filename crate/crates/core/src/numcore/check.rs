//! Central finite-difference gradient checking.
//!
//! Evaluates a forward-only closure at perturbed leaf values; never touches
//! the tape's backward rules, so it serves as an independent oracle for them.

use super::{Tape, Var};

/// Leaf specification for a gradient check: shape plus base values.
#[derive(Clone)]
pub struct LeafSpec {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl LeafSpec {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(rows * cols, values.len());
        LeafSpec { rows, cols, values }
    }
}

fn eval<F>(f: &F, leaves: &[LeafSpec]) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves
        .iter()
        .map(|l| tape.leaf(l.rows, l.cols, l.values.clone(), true))
        .collect();
    let out = f(&mut tape, &vars);
    tape.scalar(out)
}

/// Central finite differences of a scalar-valued closure with respect to
/// every element of every leaf.
pub fn finite_diff<F>(f: &F, leaves: &[LeafSpec], step: f64) -> Vec<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut grads = Vec::with_capacity(leaves.len());
    for li in 0..leaves.len() {
        let mut g = vec![0.0; leaves[li].values.len()];
        for ei in 0..g.len() {
            let mut plus = leaves.to_vec();
            plus[li].values[ei] += step;
            let mut minus = leaves.to_vec();
            minus[li].values[ei] -= step;
            g[ei] = (eval(f, &plus) - eval(f, &minus)) / (2.0 * step);
        }
        grads.push(g);
    }
    grads
}

/// Runs backward on the closure and compares against [`finite_diff`].
/// Returns the worst relative error seen across all leaf elements.
pub fn max_grad_error<F>(f: &F, leaves: &[LeafSpec], step: f64) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves
        .iter()
        .map(|l| tape.leaf(l.rows, l.cols, l.values.clone(), true))
        .collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out).expect("scalar loss");
    let numeric = finite_diff(f, leaves, step);
    let mut worst: f64 = 0.0;
    for (v, num) in vars.iter().zip(&numeric) {
        let analytic = grads.of(*v);
        for (&a, &n) in analytic.iter().zip(num) {
            let denom = a.abs().max(n.abs()).max(1.0);
            worst = worst.max((a - n).abs() / denom);
        }
    }
    worst
}
