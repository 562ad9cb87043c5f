use kprior::mlp::{
    dl_kprior_grad, dl_kprior_value, kd_leftover_identity_check, mlp_forward, mlp_forward_batch, mlp_loss_grad, Activation, MlpParams,
    MlpSpec, OutputKind, TargetMode,
};
use kprior::LabeledData;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scalar-loop forward pass, independent of the library's flat layout walk.
fn naive_forward(spec: &MlpSpec, p: &MlpParams, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let sizes = spec.layer_sizes();
    let mut a = x.to_vec();
    let mut pre_hidden = Vec::new();
    for l in 0..sizes.len() - 1 {
        let (w, b) = p.layer(spec, l);
        let mut z = vec![0.0; sizes[l + 1]];
        for r in 0..sizes[l + 1] {
            let mut s = b[r];
            for c in 0..sizes[l] {
                s += w[(r, c)] * a[c];
            }
            z[r] = s;
        }
        if l + 2 < sizes.len() {
            pre_hidden.extend_from_slice(&z);
            a = z
                .iter()
                .map(|&v| match spec.activation() {
                    Activation::Relu => v.max(0.0),
                    Activation::Tanh => v.tanh(),
                })
                .collect();
        } else {
            a = z;
        }
    }
    (a, pre_hidden)
}

struct Case {
    spec: MlpSpec,
    params: MlpParams,
    teacher: MlpParams,
    data: LabeledData,
}

fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let depth = rng.random_range(1..=3);
        let mut sizes = vec![rng.random_range(1..=8)];
        let hidden_caps = [16, 8];
        for k in 0..depth {
            sizes.push(rng.random_range(1..=hidden_caps[k.min(1)]));
        }
        let softmax = rng.random_bool(0.5);
        let (out, k) = if softmax {
            let k = rng.random_range(2..=3);
            (OutputKind::Softmax(k), k)
        } else {
            (OutputKind::Sigmoid, 1)
        };
        sizes.push(k);
        let act = if rng.random_bool(0.5) { Activation::Relu } else { Activation::Tanh };
        let spec = MlpSpec::new(sizes.clone(), act, out).unwrap();
        let params = MlpParams::init(&spec, rng.random());
        let teacher = MlpParams::init(&spec, rng.random());
        let n = rng.random_range(1..=6);
        let inputs = DMatrix::from_fn(n, sizes[0], |_, _| rng.random_range(-1.5..1.5));
        let labels = DVector::from_fn(n, |_, _| rng.random_range(0..k.max(2)) as f64);
        let data = LabeledData::new(inputs, labels).unwrap();
        // keep relu away from its kink so central differences are valid
        let near_kink = act == Activation::Relu
            && (0..n).any(|i| {
                let (_, z) = naive_forward(&spec, &params, &data.row(i));
                z.iter().any(|v| v.abs() < 1e-3)
            });
        if !near_kink {
            return Case { spec, params, teacher, data };
        }
    }
}

fn fd_check(f: impl Fn(&DVector<f64>) -> f64, w: &DVector<f64>, g: &DVector<f64>, tol: f64) -> f64 {
    let h = 1e-5;
    let mut fd = DVector::zeros(w.len());
    for j in 0..w.len() {
        let mut wp = w.clone();
        wp[j] += h;
        let mut wm = w.clone();
        wm[j] -= h;
        fd[j] = (f(&wp) - f(&wm)) / (2.0 * h);
    }
    let rel = (&fd - g).norm() / g.norm().max(1.0);
    assert!(rel <= tol, "finite-difference mismatch {rel:e}");
    rel
}

#[test]
fn forward_matches_naive_oracle() {
    for seed in 0..20 {
        let c = random_case(seed);
        for i in 0..c.data.len() {
            let x = c.data.row(i);
            let got = mlp_forward(&c.params, &c.spec, &x).unwrap();
            let (want, _) = naive_forward(&c.spec, &c.params, &x);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn relu_stack_without_biases_is_positively_homogeneous() {
    let spec = MlpSpec::new(vec![3, 5, 4, 1], Activation::Relu, OutputKind::Sigmoid).unwrap();
    let p = MlpParams::init(&spec, 12);
    // Glorot init leaves biases at zero, so f(2x) = 2 f(x)
    let x = [0.3, -0.8, 1.1];
    let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let f1 = mlp_forward(&p, &spec, &x).unwrap()[0];
    let f2 = mlp_forward(&p, &spec, &x2).unwrap()[0];
    assert!((f2 - 2.0 * f1).abs() <= 1e-12 * f1.abs().max(1.0));
}

#[test]
fn loss_gradients_pass_finite_differences() {
    for seed in 0..20 {
        let c = random_case(100 + seed);
        let w = c.params.flatten().clone();
        let teacher_logits = mlp_forward_batch(&c.teacher, &c.spec, &c.data.inputs).unwrap();
        let modes = [
            TargetMode::Hard,
            TargetMode::Soft {
                teacher_logits: &teacher_logits,
                temperature: 1.0,
            },
            TargetMode::Soft {
                teacher_logits: &teacher_logits,
                temperature: 5.0,
            },
        ];
        for mode in modes {
            let eval = |w: &DVector<f64>| {
                let p = MlpParams::unflatten(&c.spec, w.clone()).unwrap();
                mlp_loss_grad(&p, &c.spec, &c.data, mode, 0.3, 0.2).unwrap()
            };
            let (_, g) = eval(&w);
            fd_check(|w| eval(w).0, &w, &g, 1e-5);
        }
    }
}

#[test]
fn lambda_one_drops_the_soft_term() {
    let c = random_case(7);
    let t = mlp_forward_batch(&c.teacher, &c.spec, &c.data.inputs).unwrap();
    let soft = TargetMode::Soft {
        teacher_logits: &t,
        temperature: 3.0,
    };
    let a = mlp_loss_grad(&c.params, &c.spec, &c.data, soft, 1.0, 0.0).unwrap();
    let b = mlp_loss_grad(&c.params, &c.spec, &c.data, TargetMode::Hard, 1.0, 0.0).unwrap();
    assert!((a.1 - b.1).amax() <= 1e-14);
}

#[test]
fn self_distillation_soft_gradient_vanishes() {
    let c = random_case(8);
    let own = mlp_forward_batch(&c.params, &c.spec, &c.data.inputs).unwrap();
    let soft = TargetMode::Soft {
        teacher_logits: &own,
        temperature: 1.0,
    };
    let (_, g) = mlp_loss_grad(&c.params, &c.spec, &c.data, soft, 0.0, 0.0).unwrap();
    assert!(g.amax() <= 1e-14);
}

#[test]
fn kd_leftover_identity_on_random_nets() {
    for seed in 0..20 {
        let c = random_case(200 + seed);
        let lambda = (seed as f64) / 19.0;
        let r = kd_leftover_identity_check(&c.params, &c.teacher, &c.spec, &c.data, lambda).unwrap();
        assert!(r <= 1e-8, "seed {seed}: {r:e}");
        let r1 = kd_leftover_identity_check(&c.params, &c.teacher, &c.spec, &c.data, 1.0).unwrap();
        assert!(r1 <= 1e-10);
    }
}

#[test]
fn deep_kprior_gradient() {
    for seed in 0..10 {
        let c = random_case(300 + seed);
        let w_star = c.teacher.flatten().clone();
        let soft = mlp_forward_batch(&c.teacher, &c.spec, &c.data.inputs).unwrap();
        let (delta, tau) = (0.4, 1.7);
        let zero = dl_kprior_grad(&c.teacher, &c.spec, &soft, &c.data.inputs, &w_star, delta, tau).unwrap();
        assert!(zero.amax() <= 1e-14);
        let g = dl_kprior_grad(&c.params, &c.spec, &soft, &c.data.inputs, &w_star, delta, tau).unwrap();
        let value = |w: &DVector<f64>| {
            let p = MlpParams::unflatten(&c.spec, w.clone()).unwrap();
            dl_kprior_value(&p, &c.spec, &soft, &c.data.inputs, &w_star, delta, tau).unwrap()
        };
        fd_check(value, c.params.flatten(), &g, 1e-5);
    }
}

#[test]
fn deep_kprior_full_memory_leftover_identity() {
    for seed in 0..10 {
        let c = random_case(400 + seed);
        let delta = 0.6;
        let w_star = c.teacher.flatten().clone();
        let soft = mlp_forward_batch(&c.teacher, &c.spec, &c.data.inputs).unwrap();
        let kp = dl_kprior_grad(&c.params, &c.spec, &soft, &c.data.inputs, &w_star, delta, 1.0).unwrap();
        // ∇ℓ̄(w) by backprop of the regularized data loss
        let (_, full) = mlp_loss_grad(&c.params, &c.spec, &c.data, TargetMode::Hard, 1.0, delta).unwrap();
        // Σ ∇f_w r* = Σ ∇f_w [h(f_w) − y] − Σ ∇f_w [h(f_w) − h(f*)]
        let (_, data_part) = mlp_loss_grad(&c.params, &c.spec, &c.data, TargetMode::Hard, 1.0, 0.0).unwrap();
        let distill = TargetMode::Soft {
            teacher_logits: &soft,
            temperature: 1.0,
        };
        let (_, soft_part) = mlp_loss_grad(&c.params, &c.spec, &c.data, distill, 0.0, 0.0).unwrap();
        let leftover = data_part - soft_part;
        let rhs = full - (leftover + &w_star * delta);
        assert!((&kp - &rhs).norm() <= 1e-8 * rhs.norm().max(1.0), "seed {seed}");
    }
}
