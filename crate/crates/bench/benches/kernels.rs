use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array2;
use srnn_pcm::updaters::{plan_mixed, Accumulator};
use srnn_pcm::{
    poisson_input, run_eprop_trial, Crossbar, DeviceModelParams, NetParams, Network, UpdaterConfig,
    Weights,
};

fn weights(p: &NetParams) -> Weights {
    let mut w = Weights::zeros(p);
    for (i, v) in w.w_in.iter_mut().enumerate() {
        *v = ((i * 7919) % 23) as f64 / 23.0 - 0.3;
    }
    for (i, v) in w.w_rec.iter_mut().enumerate() {
        *v = ((i * 104_729) % 31) as f64 / 62.0 - 0.25;
    }
    w.w_out.fill(0.05);
    w
}

fn network(c: &mut Criterion) {
    let p = NetParams::default();
    let net = Network::new(&weights(&p), &p).unwrap();
    let x = poisson_input(50.0, 1000, p.n_in, p.dt, 1).unwrap();
    let target = Array2::zeros((1000, p.n_out));
    let feedback = Array2::from_elem((p.n_out, p.n_rec), 0.05);
    c.bench_function("forward trial 100x100, 1000 steps", |b| {
        b.iter(|| net.run_trial(&x).unwrap())
    });
    c.bench_function("e-prop trial 100x100, 1000 steps", |b| {
        b.iter(|| run_eprop_trial(&net, &x, &target, &feedback).unwrap())
    });
}

fn crossbar(c: &mut Criterion) {
    let params = DeviceModelParams::default();
    let mut xbar = Crossbar::new(100, 100, 1, params, 3).unwrap();
    let beta = 1.0 / 11.9;
    let w = Array2::from_shape_fn((100, 100), |(r, c)| ((r * 31 + c * 17) % 21) as f64 / 20.0 - 0.5);
    xbar.program_weights(&w, beta).unwrap();
    c.bench_function("read_effective 100x100", |b| {
        b.iter(|| xbar.read_effective(beta).unwrap())
    });
    let grad = Array2::from_shape_fn((100, 100), |(r, c)| ((r + 3 * c) % 11) as f64 * 0.01 - 0.05);
    let cfg = UpdaterConfig::default();
    c.bench_function("plan_mixed + apply_plan 100x100", |b| {
        b.iter_batched(
            || (xbar.clone(), Accumulator::zeros(100, 100)),
            |(mut x, mut acc)| {
                let plan = plan_mixed(&grad, &cfg, &mut acc, &x, beta).unwrap();
                x.apply_plan(&plan).unwrap()
            },
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, network, crossbar);
criterion_main!(benches);
