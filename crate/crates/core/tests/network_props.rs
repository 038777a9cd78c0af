use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srnn_pcm::{poisson_input, run_eprop_trial, NetParams, NetState, Network, SpikeTrain, Weights};

const STEPS: usize = 60;

fn params(n_rec: usize) -> NetParams {
    NetParams {
        n_in: 6,
        n_rec,
        n_out: 2,
        ..NetParams::default()
    }
}

fn random_weights(p: &NetParams, seed: u64) -> Weights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Weights::zeros(p);
    w.w_in.mapv_inplace(|_| rng.random_range(-0.3..0.9));
    w.w_rec.mapv_inplace(|_| rng.random_range(-0.4..0.4));
    w.w_out.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    w
}

fn input(p: &NetParams, seed: u64) -> SpikeTrain {
    poisson_input(200.0, STEPS, p.n_in, p.dt, seed).unwrap()
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn recurrent_diagonal_is_ignored(seed in any::<u64>(), n_rec in 2usize..8, diag in -5.0f64..5.0) {
        let p = params(n_rec);
        let w = random_weights(&p, seed);
        let mut w_self = w.clone();
        for j in 0..n_rec {
            w_self.w_rec[[j, j]] = diag;
        }
        let x = input(&p, seed ^ 1);
        let a = Network::new(&w, &p).unwrap().run_trial(&x).unwrap();
        let b = Network::new(&w_self, &p).unwrap().run_trial(&x).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn readout_superposes(seed in any::<u64>(), n_rec in 1usize..8) {
        let p = params(n_rec);
        let w = random_weights(&p, seed);
        let x = input(&p, seed ^ 2);
        let mut w1 = w.clone();
        w1.w_out = random_matrix(p.n_out, n_rec, seed ^ 3);
        let mut w2 = w.clone();
        w2.w_out = random_matrix(p.n_out, n_rec, seed ^ 4);
        let mut w12 = w.clone();
        w12.w_out = &w1.w_out + &w2.w_out;
        let y1 = Network::new(&w1, &p).unwrap().run_trial(&x).unwrap().y;
        let y2 = Network::new(&w2, &p).unwrap().run_trial(&x).unwrap().y;
        let y12 = Network::new(&w12, &p).unwrap().run_trial(&x).unwrap().y;
        for ((a, b), c) in y1.iter().zip(&y2).zip(&y12) {
            prop_assert!((a + b - c).abs() < 1e-9);
        }
    }

    #[test]
    fn membrane_stays_bounded(seed in any::<u64>(), n_rec in 1usize..8) {
        let p = params(n_rec);
        let w = random_weights(&p, seed);
        let x = input(&p, seed ^ 5);
        let net = Network::new(&w, &p).unwrap();
        let drive = (0..n_rec)
            .map(|j| {
                let rec: f64 = (0..n_rec).filter(|&i| i != j).map(|i| w.w_rec[[j, i]].abs()).sum();
                let inp: f64 = w.w_in.row(j).iter().map(|v| v.abs()).sum();
                rec + inp
            })
            .fold(0.0, f64::max);
        let bound = drive / (1.0 - p.alpha()) + p.v_th;
        let mut state = NetState::zeros(&p);
        for t in 0..x.steps() {
            net.step(&mut state, x.row(t));
            for &v in &state.v {
                prop_assert!(v.abs() <= bound + 1e-9, "|v| = {} > {}", v.abs(), bound);
            }
        }
    }

    #[test]
    fn learning_signals_are_local(seed in any::<u64>(), n_rec in 2usize..8, k_pick in any::<usize>()) {
        // Changing neuron k's feedback weights only moves neuron k's rows of
        // the input and recurrent gradients.
        let p = params(n_rec);
        let w = random_weights(&p, seed);
        let x = input(&p, seed ^ 6);
        let target = random_matrix(STEPS, p.n_out, seed ^ 7);
        let b = random_matrix(p.n_out, n_rec, seed ^ 8);
        let k = k_pick % n_rec;
        let mut b_k = b.clone();
        for o in 0..p.n_out {
            b_k[[o, k]] += 1.5;
        }
        let net = Network::new(&w, &p).unwrap();
        let g = run_eprop_trial(&net, &x, &target, &b).unwrap().grads;
        let g_k = run_eprop_trial(&net, &x, &target, &b_k).unwrap().grads;
        prop_assume!(g.d_in.iter().any(|&v| v != 0.0));
        prop_assert_eq!(&g.d_out, &g_k.d_out);
        for j in (0..n_rec).filter(|&j| j != k) {
            prop_assert_eq!(g.d_in.row(j), g_k.d_in.row(j));
            prop_assert_eq!(g.d_rec.row(j), g_k.d_rec.row(j));
        }
    }
}
