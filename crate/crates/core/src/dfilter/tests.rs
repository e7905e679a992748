use super::*;
use crate::types::AgentId;
use rand::Rng;

fn pred(modes: Vec<Vec<[f64; 2]>>, conf: Vec<f64>) -> MultiModalPrediction {
    MultiModalPrediction::new(
        AgentId(3),
        0,
        modes.into_iter().map(|m| MovementTrajectory::new(m).unwrap()).collect(),
        conf,
    )
    .unwrap()
}

fn random_pred(rng: &mut ChaCha8Rng, k: usize, n: usize) -> MultiModalPrediction {
    let modes = (0..k).map(|_| (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect()).collect();
    pred(modes, (0..k).map(|_| rng.gen_range(0.1..1.0)).collect())
}

fn filter(feature_dim: usize, n: usize, seed: u64) -> DifferentiableFilter {
    let mut df = DifferentiableFilter::new(feature_dim, n, DfConfig { hidden: 5, init_r: 0.5, ..DfConfig::default() }, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    df.net.params_mut().iter_mut().for_each(|p| *p += rng.gen_range(-0.3..0.3));
    df
}

#[test]
fn birth_returns_raw() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let df = filter(3, 4, 1);
    let raw = random_pred(&mut rng, 3, 4);
    let (refined, state) = df.refine(&raw, &[0.1, 0.2, 0.3], false, None).unwrap();
    assert_eq!(refined, raw);
    assert_eq!(state.covs[0], DMatrix::identity(4, 4));
}

#[test]
fn constant_stream_is_a_fixed_point() {
    let df = filter(2, 5, 2);
    let raw = pred(vec![vec![[0.3, -0.1]; 5], vec![[0.0, 0.0]; 5]], vec![0.7, 0.3]);
    let mut state = None;
    let mut last: Option<MultiModalPrediction> = None;
    for _ in 0..10 {
        let (refined, s) = df.refine(&raw, &[0.5, -0.5], false, state.as_ref()).unwrap();
        for (a, b) in refined.modes().iter().zip(raw.modes()) {
            for (x, y) in a.steps().iter().zip(b.steps()) {
                assert!((x[0] - y[0]).abs() < 1e-12 && (x[1] - y[1]).abs() < 1e-12);
            }
        }
        if let Some(prev) = &last {
            // Overlapping absolute positions agree once the agent moves by
            // the first step: fluctuation is zero.
            let m = prev.modes()[0].steps();
            let c = refined.modes()[0].steps();
            for j in 0..4 {
                assert!((m[j + 1][0] - c[j][0]).abs() < 1e-12);
            }
        }
        assert_eq!(refined.confidences(), raw.confidences());
        last = Some(refined);
        state = Some(s);
    }
}

// Hand execution of predict, gain and update for tau_f = 3 on one axis,
// using cofactor inversion of the 3x3 innovation matrix.
#[test]
fn two_frame_hand_run() {
    let r = 0.5;
    let net = CovarianceNet::constant(1, 3, 4, r);
    let df = DifferentiableFilter::with_net(net, DfConfig { q: 0.01, sigma0: 1.0, ..DfConfig::default() });
    let f0 = pred(vec![vec![[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]], vec![1.0]);
    let f1 = pred(vec![vec![[2.5, 1.0], [2.0, 1.0], [4.0, 1.0]]], vec![1.0]);
    let (_, s0) = df.refine(&f0, &[0.0], false, None).unwrap();
    let (out, _) = df.refine(&f1, &[0.0], false, Some(&s0)).unwrap();

    // Prior: A [1,2,3] = [2,3,3]; A I A^T + 0.01 I.
    let m = [2.0, 3.0, 3.0];
    let p = [[1.01, 0.0, 0.0], [0.0, 1.01, 1.0], [0.0, 1.0, 1.01]];
    let rr = r * r;
    let s = [[p[0][0] + rr, p[0][1], p[0][2]], [p[1][0], p[1][1] + rr, p[1][2]], [p[2][0], p[2][1], p[2][2] + rr]];
    let det = s[0][0] * (s[1][1] * s[2][2] - s[1][2] * s[2][1]) - s[0][1] * (s[1][0] * s[2][2] - s[1][2] * s[2][0])
        + s[0][2] * (s[1][0] * s[2][1] - s[1][1] * s[2][0]);
    let cof = |i: usize, j: usize| {
        let rows: Vec<usize> = (0..3).filter(|&x| x != i).collect();
        let cols: Vec<usize> = (0..3).filter(|&x| x != j).collect();
        let minor = s[rows[0]][cols[0]] * s[rows[1]][cols[1]] - s[rows[0]][cols[1]] * s[rows[1]][cols[0]];
        if (i + j).is_multiple_of(2) { minor } else { -minor }
    };
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = cof(j, i) / det;
        }
    }
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (0..3).map(|l| p[i][l] * inv[l][j]).sum();
        }
    }
    let z = [2.5, 2.0, 4.0];
    let expected: Vec<f64> = (0..3).map(|i| m[i] + (0..3).map(|j| k[i][j] * (z[j] - m[j])).sum::<f64>()).collect();
    let got = out.modes()[0].axis(0);
    for i in 0..3 {
        assert!((got[i] - expected[i]).abs() < 1e-12, "{got:?} vs {expected:?}");
    }
}

#[test]
fn ignoring_observations_rolls_out_the_process_model() {
    let n = 5;
    let net = CovarianceNet::constant(1, n, 3, 1e8);
    let df = DifferentiableFilter::with_net(net, DfConfig { q: 0.0, ..DfConfig::default() });
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let first = random_pred(&mut rng, 2, n);
    let (_, mut state) = df.refine(&first, &[0.0], false, None).unwrap();
    for t in 1..8 {
        let raw = random_pred(&mut rng, 2, n);
        let (out, s) = df.refine(&raw, &[0.0], false, Some(&state)).unwrap();
        for (mode, orig) in out.modes().iter().zip(first.modes()) {
            for j in 0..n {
                let src = (j + t).min(n - 1);
                assert!((mode.steps()[j][0] - orig.steps()[src][0]).abs() < 1e-9);
                assert!((mode.steps()[j][1] - orig.steps()[src][1]).abs() < 1e-9);
            }
        }
        state = s;
    }
}

#[test]
fn posterior_never_exceeds_prior_and_stays_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..20 {
        let n = rng.gen_range(1..7);
        let df = filter(2, n, seed);
        let mut state = None;
        for _ in 0..6 {
            let raw = random_pred(&mut rng, 2, n);
            let feat = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let (_, s, tape) = df.refine_recorded(&raw, &feat, rng.gen_bool(0.3), state.as_ref()).unwrap();
            for (prior, post) in tape.covariance_diagonals() {
                for (a, b) in prior.iter().zip(&post) {
                    assert!(*b <= a + 1e-12);
                }
            }
            for axis in 0..2 {
                let fs = s.mode_state(0, axis);
                assert!(fs.asymmetry() < 1e-9);
                assert!(fs.min_eigenvalue() > -1e-9);
            }
            state = Some(s);
        }
    }
}

#[test]
fn swapping_axes_swaps_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 4;
    // phi_R outputs must match across axes for the swap to be exact.
    let net = CovarianceNet::constant(1, n, 3, 0.3);
    let df = DifferentiableFilter::with_net(net, DfConfig::default());
    let swap = |p: &MultiModalPrediction| {
        pred(p.modes().iter().map(|m| m.steps().iter().map(|s| [s[1], s[0]]).collect()).collect(), p.confidences().to_vec())
    };
    let (mut a, mut b) = (None, None);
    for _ in 0..4 {
        let raw = random_pred(&mut rng, 2, n);
        let (ra, sa) = df.refine(&raw, &[0.2], false, a.as_ref()).unwrap();
        let (rb, sb) = df.refine(&swap(&raw), &[0.2], false, b.as_ref()).unwrap();
        assert_eq!(swap(&ra), rb);
        a = Some(sa);
        b = Some(sb);
    }
}

#[test]
fn greedy_association_follows_permuted_modes() {
    let n = 6;
    let net = CovarianceNet::constant(1, n, 3, 0.2);
    let df = DifferentiableFilter::with_net(net, DfConfig { association: ModeAssociation::Greedy, ..DfConfig::default() });
    let left = vec![[1.0, 0.5]; n];
    let right = vec![[1.0, -0.5]; n];
    let (_, s0) = df.refine(&pred(vec![left.clone(), right.clone()], vec![0.5, 0.5]), &[0.0], false, None).unwrap();
    let (out, s1) = df.refine(&pred(vec![right.clone(), left.clone()], vec![0.6, 0.4]), &[0.0], false, Some(&s0)).unwrap();
    // Each raw mode meets the state it continues, so nothing moves.
    assert_eq!(out.modes()[0].steps(), &right[..]);
    assert_eq!(out.modes()[1].steps(), &left[..]);
    assert_eq!(s1.means[0][1][0], -0.5);
}

#[test]
fn horizon_mismatch_rejected() {
    let df = filter(1, 4, 0);
    let raw = pred(vec![vec![[0.0, 0.0]; 3]], vec![1.0]);
    assert!(df.refine(&raw, &[0.0], false, None).is_err());
}

#[derive(Clone)]
struct Unroll {
    raws: Vec<MultiModalPrediction>,
    feats: Vec<Vec<f64>>,
    occluded: Vec<bool>,
    weights: Vec<Vec<Vec<[f64; 2]>>>,
}

impl Unroll {
    fn random(rng: &mut ChaCha8Rng, frames: usize, k: usize, n: usize, fd: usize) -> Self {
        Self {
            raws: (0..frames).map(|_| random_pred(rng, k, n)).collect(),
            feats: (0..frames).map(|_| (0..fd).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
            occluded: (0..frames).map(|_| rng.gen_bool(0.5)).collect(),
            weights: (0..frames)
                .map(|_| (0..k).map(|_| (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect()).collect())
                .collect(),
        }
    }

    fn loss(&self, df: &DifferentiableFilter) -> f64 {
        let mut state = None;
        let mut total = 0.0;
        for t in 0..self.raws.len() {
            let (out, s) = df.refine(&self.raws[t], &self.feats[t], self.occluded[t], state.as_ref()).unwrap();
            for (m, w) in out.modes().iter().zip(&self.weights[t]) {
                for (s, w) in m.steps().iter().zip(w) {
                    total += s[0] * w[0] + s[1] * w[1] + 0.5 * s[0] * s[0];
                }
            }
            state = Some(s);
        }
        total
    }

    fn gradients(&self, df: &DifferentiableFilter) -> (Vec<f64>, Vec<RefineGrad>) {
        let mut state = None;
        let mut tapes = Vec::new();
        let mut outs = Vec::new();
        for t in 0..self.raws.len() {
            let (out, s, tape) = df.refine_recorded(&self.raws[t], &self.feats[t], self.occluded[t], state.as_ref()).unwrap();
            tapes.push(tape);
            outs.push(out);
            state = Some(s);
        }
        let mut grads = vec![0.0; df.net.params().len()];
        let mut carried: Option<AgentFilterGrad> = None;
        let mut per_frame = Vec::new();
        for t in (0..self.raws.len()).rev() {
            let g: Vec<Vec<[f64; 2]>> = outs[t]
                .modes()
                .iter()
                .zip(&self.weights[t])
                .map(|(m, w)| m.steps().iter().zip(w).map(|(s, w)| [w[0] + s[0], w[1]]).collect())
                .collect();
            let rg = df.refine_backward(&tapes[t], &g, carried.as_ref(), &mut grads);
            carried = rg.previous.clone();
            per_frame.push(rg);
        }
        per_frame.reverse();
        (grads, per_frame)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..4 {
        let (k, n, fd) = (2, 4, 3);
        let df = filter(fd, n, seed);
        let unroll = Unroll::random(&mut rng, 3, k, n, fd);
        let (grads, per_frame) = unroll.gradients(&df);
        let h = 1e-5;
        for i in 0..grads.len() {
            let mut p = df.clone();
            p.net.params_mut()[i] += h;
            let mut m = df.clone();
            m.net.params_mut()[i] -= h;
            let num = (unroll.loss(&p) - unroll.loss(&m)) / (2.0 * h);
            assert!(rel_err(num, grads[i]) < 1e-5, "param {i}: {num} vs {}", grads[i]);
        }
        for t in 0..3 {
            for j in 0..fd {
                let mut u = unroll.clone();
                u.feats[t][j] += h;
                let up = u.loss(&df);
                u.feats[t][j] -= 2.0 * h;
                let um = u.loss(&df);
                let num = (up - um) / (2.0 * h);
                assert!(rel_err(num, per_frame[t].feature[j]) < 1e-5, "feature t={t} j={j}");
            }
            for mode in 0..k {
                for j in 0..n {
                    for a in 0..2 {
                        let bump = |d: f64| {
                            let mut u = unroll.clone();
                            let mut steps: Vec<Vec<[f64; 2]>> = u.raws[t].modes().iter().map(|m| m.steps().to_vec()).collect();
                            steps[mode][j][a] += d;
                            u.raws[t] = pred(steps, u.raws[t].confidences().to_vec());
                            u.loss(&df)
                        };
                        let num = (bump(h) - bump(-h)) / (2.0 * h);
                        assert!(rel_err(num, per_frame[t].raw_modes[mode][j][a]) < 1e-5, "raw t={t} mode={mode} j={j}");
                    }
                }
            }
        }
    }
}

#[test]
fn stationary_point_gives_zero_gradient() {
    // Raw predictions equal the prior mean, so R has no effect on the output.
    let n = 4;
    let df = filter(2, n, 9);
    let raw = pred(vec![vec![[0.4, 0.1]; n]; 2], vec![1.0, 1.0]);
    let unroll = Unroll {
        raws: vec![raw.clone(), raw.clone(), raw],
        feats: vec![vec![0.1, 0.2]; 3],
        occluded: vec![false, true, false],
        weights: vec![vec![vec![[1.0, -1.0]; n]; 2]; 3],
    };
    let (grads, _) = unroll.gradients(&df);
    assert!(grads.iter().all(|g| g.abs() < 1e-12));
}
