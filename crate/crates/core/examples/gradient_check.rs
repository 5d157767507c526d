//! Compare backprop gradients with central differences on a small network.

use intentbot::mlp::Network;

fn main() {
    let net = Network::init(&[5, 4, 3], 11).unwrap();
    let batch: Vec<(&[f64], usize)> = vec![(&[0.3, -1.2, 0.5, 2.0, -0.1], 2), (&[1.0, 0.0, -0.4, 0.2, 0.9], 0)];
    let (grads, loss) = net.gradients(&batch).unwrap();
    println!("loss {loss:.6}");

    let eps = 1e-5;
    let mut worst = 0.0f64;
    let mut probe = net.clone();
    for li in 0..net.layers().len() {
        for p in 0..net.layers()[li].weights.len() {
            let w = probe.layers()[li].weights[p];
            probe.layers_mut()[li].weights[p] = w + eps;
            let plus = probe.loss(&batch).unwrap();
            probe.layers_mut()[li].weights[p] = w - eps;
            let minus = probe.loss(&batch).unwrap();
            probe.layers_mut()[li].weights[p] = w;
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads.layers[li].weights[p];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        println!("layer {li}: {}x{} weights checked", net.layers()[li].fan_out, net.layers()[li].fan_in);
    }
    println!("max relative error {worst:.2e}");
}
