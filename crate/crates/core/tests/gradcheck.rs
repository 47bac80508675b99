//! Autodiff against central differences for every differentiable primitive,
//! 20 seeded trials each, inputs of magnitude at most 1, h = 1e-3.

use wonderland::numerics::{finite_diff_grad, relative_error, ConvGeometry, Rng, Tape, Tensor, Var};
use wonderland::Result;

const TRIALS: u64 = 20;
const H: f32 = 1e-3;
const TOL: f32 = 1e-2;

type Op = dyn Fn(&mut Tape, &[Var]) -> Result<Var>;

/// Inputs are drawn from `[lo, hi]` per operand.
struct Case {
    name: &'static str,
    inputs: Vec<(Vec<usize>, f32, f32)>,
    op: Box<Op>,
}

fn case(name: &'static str, inputs: &[(&[usize], f32, f32)], op: impl Fn(&mut Tape, &[Var]) -> Result<Var> + 'static) -> Case {
    Case { name, inputs: inputs.iter().map(|(s, lo, hi)| (s.to_vec(), *lo, *hi)).collect(), op: Box::new(op) }
}

fn unit(shape: &[usize]) -> (&[usize], f32, f32) {
    (shape, -1.0, 1.0)
}

fn positive(shape: &[usize]) -> (&[usize], f32, f32) {
    (shape, 0.2, 1.0)
}

/// `Σ out ⊙ proj` evaluated in f64 outside the tape.
fn projected(out: &Tensor, proj: &Tensor) -> f64 {
    out.data().iter().zip(proj.data()).map(|(&a, &b)| a as f64 * b as f64).sum()
}

fn worst_error(c: &Case, seed: u64) -> Result<f32> {
    let mut rng = Rng::seed(seed);
    let inputs: Vec<Tensor> = c.inputs.iter().map(|(s, lo, hi)| Tensor::rand_uniform(s, *lo, *hi, &mut rng)).collect();
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = (c.op)(&mut tape, &vars)?;
    let proj = Tensor::rand_uniform(tape.shape(out), -1.0, 1.0, &mut rng);
    let pv = tape.constant(proj.clone());
    let weighted = tape.mul(out, pv)?;
    let loss = tape.sum(weighted);
    tape.backward(loss)?;

    let mut worst = 0.0f32;
    for (i, x) in inputs.iter().enumerate() {
        let auto = tape.grad(vars[i]).unwrap_or_else(|| Tensor::zeros(x.shape()));
        let fd = finite_diff_grad(
            |probe| {
                let mut t = Tape::new();
                let vs: Vec<Var> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, v)| t.constant(if j == i { probe.clone() } else { v.clone() }))
                    .collect();
                let o = (c.op)(&mut t, &vs)?;
                Ok(projected(t.value(o), &proj))
            },
            x,
            H,
        )?;
        worst = worst.max(relative_error(auto.data(), fd.data(), 1e-3));
    }
    Ok(worst)
}

fn run(cases: Vec<Case>) {
    let mut failures = Vec::new();
    for c in &cases {
        let mut worst = 0.0f32;
        for seed in 0..TRIALS {
            worst = worst.max(worst_error(c, 1000 + seed).unwrap_or_else(|e| panic!("{}: {e}", c.name)));
        }
        if worst >= TOL {
            failures.push(format!("{} ({worst:.2e})", c.name));
        }
    }
    assert!(failures.is_empty(), "gradient mismatch: {}", failures.join(", "));
}

#[test]
fn elementwise_primitives() {
    run(vec![
        case("add", &[unit(&[3, 4]), unit(&[3, 4])], |t, x| t.add(x[0], x[1])),
        case("add_broadcast", &[unit(&[3, 4]), unit(&[4])], |t, x| t.add(x[0], x[1])),
        case("sub", &[unit(&[3, 4]), unit(&[3, 4])], |t, x| t.sub(x[0], x[1])),
        case("mul", &[unit(&[3, 4]), unit(&[3, 4])], |t, x| t.mul(x[0], x[1])),
        case("mul_broadcast", &[unit(&[2, 3, 4]), unit(&[3, 1])], |t, x| t.mul(x[0], x[1])),
        case("div", &[unit(&[3, 4]), (&[3, 4], 0.5, 1.0)], |t, x| t.div(x[0], x[1])),
        case("scale", &[unit(&[5])], |t, x| Ok(t.scale(x[0], -2.5))),
        case("add_scalar", &[unit(&[5])], |t, x| Ok(t.add_scalar(x[0], 0.7))),
        case("neg", &[unit(&[5])], |t, x| Ok(t.neg(x[0]))),
        case("exp", &[unit(&[6])], |t, x| Ok(t.exp(x[0]))),
        case("log", &[positive(&[6])], |t, x| Ok(t.log(x[0]))),
        case("sqrt", &[positive(&[6])], |t, x| Ok(t.sqrt(x[0]))),
        case("square", &[unit(&[6])], |t, x| Ok(t.square(x[0]))),
        case("tanh", &[unit(&[6])], |t, x| Ok(t.tanh(x[0]))),
        case("sigmoid", &[unit(&[6])], |t, x| Ok(t.sigmoid(x[0]))),
        case("silu", &[unit(&[6])], |t, x| Ok(t.silu(x[0]))),
        case("gelu", &[unit(&[6])], |t, x| Ok(t.gelu(x[0]))),
        case("clamp_interior", &[(&[6], -0.45, 0.45)], |t, x| Ok(t.clamp(x[0], -0.5, 0.5))),
        case("clamp_saturated", &[(&[6], 0.55, 1.0)], |t, x| Ok(t.clamp(x[0], -0.5, 0.5))),
    ]);
}

#[test]
fn reductions_and_losses() {
    run(vec![
        case("sum", &[unit(&[3, 4])], |t, x| Ok(t.sum(x[0]))),
        case("mean", &[unit(&[3, 4])], |t, x| Ok(t.mean(x[0]))),
        case("sum_axis0", &[unit(&[3, 4, 2])], |t, x| t.sum_axis(x[0], 0)),
        case("sum_axis2", &[unit(&[3, 4, 2])], |t, x| t.sum_axis(x[0], 2)),
        case("mse", &[unit(&[3, 4]), unit(&[3, 4])], |t, x| t.mse(x[0], x[1])),
    ]);
}

#[test]
fn layout_primitives() {
    run(vec![
        case("reshape", &[unit(&[3, 4])], |t, x| t.reshape(x[0], &[2, 6])),
        case("broadcast_to", &[unit(&[3, 1])], |t, x| t.broadcast_to(x[0], &[2, 3, 4])),
        case("permute", &[unit(&[2, 3, 4])], |t, x| t.permute(x[0], &[2, 0, 1])),
        case("transpose", &[unit(&[3, 5])], |t, x| t.transpose(x[0])),
        case("concat0", &[unit(&[2, 3]), unit(&[4, 3])], |t, x| t.concat(&[x[0], x[1]], 0)),
        case("concat1", &[unit(&[2, 3]), unit(&[2, 1]), unit(&[2, 2])], |t, x| t.concat(&[x[0], x[1], x[2]], 1)),
        case("narrow", &[unit(&[4, 6])], |t, x| t.narrow(x[0], 1, 2, 3)),
    ]);
}

#[test]
fn dense_primitives() {
    run(vec![
        case("matmul", &[unit(&[3, 4]), unit(&[4, 5])], |t, x| t.matmul(x[0], x[1])),
        case("linear", &[unit(&[3, 4]), unit(&[4, 2]), unit(&[2])], |t, x| t.linear(x[0], x[1], Some(x[2]))),
        case("softmax", &[unit(&[3, 5])], |t, x| t.softmax(x[0])),
        case("layer_norm", &[unit(&[3, 6])], |t, x| t.layer_norm(x[0], 1e-5)),
        case("l2_normalize", &[(&[3, 4], 0.2, 1.0)], |t, x| t.l2_normalize(x[0], 1e-8)),
        case("attention_1head", &[unit(&[4, 6]), unit(&[4, 6]), unit(&[4, 6])], |t, x| t.attention(x[0], x[1], x[2], 1)),
        case("attention_3head", &[unit(&[5, 6]), unit(&[5, 6]), unit(&[5, 6])], |t, x| t.attention(x[0], x[1], x[2], 3)),
    ]);
}

#[test]
fn convolution_primitives() {
    run(vec![
        case("conv3d_strided", &[unit(&[3, 4, 4, 2]), unit(&[2, 2, 2, 2, 3]), unit(&[3])], |t, x| {
            t.conv3d(x[0], x[1], Some(x[2]), ConvGeometry::new([2, 2, 2], [1, 2, 2], [0, 0, 0]))
        }),
        case("conv3d_padded", &[unit(&[2, 3, 3, 2]), unit(&[1, 3, 3, 2, 2])], |t, x| {
            t.conv3d(x[0], x[1], None, ConvGeometry::new([1, 3, 3], [1, 1, 1], [0, 1, 1]))
        }),
        case("conv_transpose3d", &[unit(&[2, 2, 2, 3]), unit(&[3, 2, 2, 2, 2]), unit(&[2])], |t, x| {
            t.conv_transpose3d(x[0], x[1], Some(x[2]), ConvGeometry::new([2, 2, 2], [2, 2, 2], [0, 0, 0]))
        }),
        case("conv_transpose3d_overlap", &[unit(&[2, 3, 3, 2]), unit(&[2, 1, 3, 3, 2])], |t, x| {
            t.conv_transpose3d(x[0], x[1], None, ConvGeometry::new([1, 3, 3], [1, 2, 2], [0, 1, 1]))
        }),
        case("conv2d", &[unit(&[5, 5, 2]), unit(&[3, 3, 2, 3]), unit(&[3])], |t, x| {
            t.conv2d(x[0], x[1], Some(x[2]), [3, 3], [2, 2], [1, 1])
        }),
    ]);
}
