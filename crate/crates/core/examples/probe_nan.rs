use igw_core::cloud::PointCloud;
use igw_core::dynamics::{flow_match_gradient, flow_match_loss, ActionGeometry, MatchConfig, MmdKernel, VelocityModel};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(353);
    let points = DMatrix::from_fn(8, 2, |_, _| rng.random_range(-1.0..1.0));
    let cloud = PointCloud::uniform(points).unwrap();
    let cfg = MatchConfig {
        k: 3,
        lambda: 10.0,
        epochs: 120,
        lr: 0.01,
        kernel: MmdKernel::with_sigma(0.5),
        geometry: ActionGeometry::IgwAction,
        try_reflection: false,
        hidden: 3,
        momentum: 0.0,
        patience: 500,
    };
    let mut model = VelocityModel::new(2, cfg.hidden, 0);
    for epoch in 0..20 {
        let (loss, grads) = flow_match_gradient(&model, &cloud, &cloud, &cfg).unwrap();
        let gmax = grads.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        println!("epoch {epoch}: total {:.6e} action {:.3e} mmd {:.3e} gmax {:.3e}", loss.total, loss.action, loss.mmd, gmax);
        for (idx, g) in grads.iter().enumerate() {
            let v = model.get_param(idx) - cfg.lr * g;
            model.set_param(idx, v);
        }
        if !model.is_finite() { println!("model went non-finite"); break; }
    }
    let final_loss = flow_match_loss(&model, &cloud, &cloud, &cfg);
    println!("final: {final_loss:?}");
}
