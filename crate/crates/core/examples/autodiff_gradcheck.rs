//! Reverse-mode gradients of a small conv → sigmoid → upsample → L1
//! graph, compared against f32 central differences.

use sdn::tensor::{Graph, Tensor};

fn loss(x: &Tensor, k: &Tensor, b: &Tensor, target: &Tensor) -> (f32, Vec<Tensor>) {
    let mut g = Graph::new();
    let xv = g.leaf(x.clone(), true);
    let kv = g.leaf(k.clone(), true);
    let bv = g.leaf(b.clone(), true);
    let t = g.constant(target.clone());
    let y = g.conv2d(xv, kv, bv).unwrap();
    let y = g.sigmoid(y).unwrap();
    let y = g.upsample_nearest2(y).unwrap();
    let l = g.l1_mean(y, t).unwrap();
    g.backward(l).unwrap();
    let grads = [xv, kv, bv].map(|v| g.grad(v).unwrap()).to_vec();
    (g.value(l).item(), grads)
}

fn main() {
    let x = Tensor::from_fn(&[6, 6, 2], |i| ((i * 7919) % 97) as f32 / 97.0 - 0.5);
    let k = Tensor::from_fn(&[3, 3, 2, 3], |i| ((i * 104_729) % 89) as f32 / 89.0 - 0.5);
    let b = Tensor::from_fn(&[3], |i| 0.05 * i as f32);
    // above every sigmoid output, so |y - t| stays smooth
    let target = Tensor::full(&[12, 12, 3], 1.5);
    let (value, grads) = loss(&x, &k, &b, &target);
    println!("loss {value:.6}");

    let h = 3e-2;
    for (name, which) in [("input", 0), ("kernel", 1), ("bias", 2)] {
        let base = [&x, &k, &b][which];
        let (mut diff, mut norm) = (0.0f64, 0.0f64);
        for i in 0..base.len() {
            let bump = |d: f32| {
                let mut p = [x.clone(), k.clone(), b.clone()];
                p[which].data_mut()[i] += d;
                loss(&p[0], &p[1], &p[2], &target).0
            };
            let numeric = (bump(h) - bump(-h)) / (2.0 * h);
            let analytic = grads[which].data()[i];
            diff += f64::from(numeric - analytic).powi(2);
            norm += f64::from(analytic).powi(2);
        }
        println!(
            "{name:<7} {:>3} entries, relative error {:.2e}",
            base.len(),
            (diff / norm).sqrt()
        );
    }
}
