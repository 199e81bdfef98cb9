//! Builds a small two-layer network on the tape, backpropagates a
//! cross-entropy loss and compares the result against central differences.

use roarbench::grad::check::check_gradients;
use roarbench::grad::{Tape, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = Tensor::new(vec![3, 2], vec![0.5, -1.0, 1.5, 0.2, -0.7, 0.9])?;
    let w1 = Tensor::new(vec![2, 4], vec![0.1, -0.3, 0.8, 0.5, -0.6, 0.2, 0.4, -0.1])?;
    let w2 = Tensor::new(vec![4, 2], vec![0.7, -0.2, 0.3, 0.9, -0.5, 0.4, 0.6, -0.8])?;
    let targets = [0, 1, 1];

    let mut tape = Tape::new();
    let (vx, v1, v2) = (tape.constant(x.clone()), tape.leaf(w1.clone()), tape.leaf(w2.clone()));
    let h = tape.matmul(vx, v1)?;
    let h = tape.tanh(h)?;
    let logits = tape.matmul(h, v2)?;
    let loss = tape.cross_entropy(logits, &targets)?;
    println!("loss {:.6}", tape.value(loss).item());
    let grads = tape.backward(loss)?;
    println!("dL/dW2 = {:?}", grads.wrt(v2).values());

    let report = check_gradients(
        &[x, w1, w2],
        |t, v| {
            let h = t.matmul(v[0], v[1])?;
            let h = t.tanh(h)?;
            let logits = t.matmul(h, v[2])?;
            t.cross_entropy(logits, &targets)
        },
        1e-5,
    )?;
    println!(
        "{} coordinates checked, max relative error {:.2e}, passes 1e-4: {}",
        report.coordinates,
        report.max_rel_error,
        report.passes(1e-4)
    );
    Ok(())
}
