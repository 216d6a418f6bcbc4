use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::env::{generate_game, Environment, GameSpec};
use crate::memory::{Trajectory, TrajectoryBuffer, Transition};
use crate::nn::{gradcheck, EncoderKind, Init, Optimizer, ParamStore, Tape};
use crate::text::{Seq, Token};

fn seq(ids: &[u16]) -> Seq {
    ids.iter().map(|&i| Token(i)).collect()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_invdy(kind: EncoderKind) -> InvDyConfig {
    InvDyConfig {
        embed_dim: 3,
        hidden: 3,
        encoder: kind,
        init: Init::Uniform(0.5),
        ..InvDyConfig::default()
    }
}

fn small_il(kind: EncoderKind) -> IlConfig {
    IlConfig {
        embed_dim: 3,
        hidden: 3,
        encoder: kind,
        init: Init::Uniform(0.5),
        ..IlConfig::default()
    }
}

#[allow(clippy::too_many_arguments)]
fn transition(
    obs: Seq,
    valid: Vec<Seq>,
    action: usize,
    reward: f64,
    next: Seq,
    next_valid: Vec<Seq>,
    terminal: bool,
) -> Arc<Transition> {
    Arc::new(Transition {
        context: build_context(None, None, &obs),
        observation: obs,
        valid: valid.into(),
        action,
        reward,
        next_observation: next,
        next_valid: next_valid.into(),
        terminal,
        trajectory_id: 0,
        step: 0,
    })
}

fn set(store: &mut ParamStore, name: &str, values: &[f64]) {
    let id = store.id(name).unwrap_or_else(|| panic!("no parameter {name}"));
    store.value_mut(id).data_mut().copy_from_slice(values);
}

fn zero_all(store: &mut ParamStore) {
    let mut r = rng(0);
    store.reinitialize(Init::Zeros, &mut r);
}

#[test]
fn zero_network_scores_zero() {
    let mut net = QNetwork::new(10, small_invdy(EncoderKind::Mean), &mut rng(1)).unwrap();
    zero_all(net.store_mut());
    let q = net
        .q_values(&seq(&[2, 3]), &[seq(&[4]), seq(&[5, 6]), seq(&[7])])
        .unwrap();
    assert_eq!(q, vec![0.0; 3]);
    let p = net.policy_distribution(&seq(&[2]), &vec![seq(&[4]); 5]).unwrap();
    assert!(p.iter().all(|&x| (x - 0.2).abs() < 1e-15));
}

#[test]
fn q_values_follow_candidate_order() {
    let net = QNetwork::new(10, small_invdy(EncoderKind::Gru), &mut rng(2)).unwrap();
    let cands = [seq(&[4]), seq(&[5, 6]), seq(&[7, 8, 9])];
    let q = net.q_values(&seq(&[2, 3]), &cands).unwrap();
    let rev: Vec<Seq> = cands.iter().rev().cloned().collect();
    let mut q_rev = net.q_values(&seq(&[2, 3]), &rev).unwrap();
    q_rev.reverse();
    assert_eq!(q, q_rev);
    assert!(net.q_values(&seq(&[2]), &[]).is_err());
}

#[test]
fn q_matches_hand_computed_forward() {
    let cfg = InvDyConfig {
        embed_dim: 2,
        hidden: 2,
        ..InvDyConfig::default()
    };
    let mut net = QNetwork::new(5, cfg, &mut rng(3)).unwrap();
    let s = net.store_mut();
    set(s, "f_o.embed", &[0.0, 0.0, 0.0, 0.0, 0.5, -1.0, 1.5, 0.25, -0.5, 2.0]);
    set(s, "f_o.proj.w", &[1.0, 0.5, -0.25, 2.0]);
    set(s, "f_o.proj.b", &[0.1, -0.2]);
    set(s, "f_a.embed", &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, -1.0, 0.5, 0.3, -0.7]);
    set(s, "f_a.proj.w", &[0.2, -0.4, 0.6, 0.8]);
    set(s, "f_a.proj.b", &[0.0, 0.3]);
    set(s, "q.0.w", &[0.1, 0.2, 0.3, 0.4, -0.5, 0.6, -0.7, 0.8]);
    set(s, "q.0.b", &[0.05, -0.05]);
    set(s, "q.1.w", &[1.5, -2.0]);
    set(s, "q.1.b", &[0.25]);

    // o = tokens {2, 3}: mean embedding (1.0, -0.375)
    let fo = [
        (1.0f64 * 1.0 + 0.5 * -0.375 + 0.1).tanh(),
        (-0.25f64 * 1.0 + 2.0 * -0.375 - 0.2).tanh(),
    ];
    let expected: Vec<f64> = [[1.0f64, 1.0], [(-1.0 + 0.3) / 2.0, (0.5 - 0.7) / 2.0]]
        .iter()
        .map(|m| {
            let fa = [(0.2 * m[0] - 0.4 * m[1]).tanh(), (0.6 * m[0] + 0.8 * m[1] + 0.3).tanh()];
            let x = [fo[0], fo[1], fa[0], fa[1]];
            let h0 = (0.1 * x[0] + 0.2 * x[1] + 0.3 * x[2] + 0.4 * x[3] + 0.05).tanh();
            let h1 = (-0.5 * x[0] + 0.6 * x[1] - 0.7 * x[2] + 0.8 * x[3] - 0.05).tanh();
            1.5 * h0 - 2.0 * h1 + 0.25
        })
        .collect();
    let q = net.q_values(&seq(&[2, 3]), &[seq(&[2]), seq(&[3, 4])]).unwrap();
    for (a, b) in q.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn greedy_ties_go_to_lowest_index() {
    let mut net = QNetwork::new(10, small_invdy(EncoderKind::Mean), &mut rng(4)).unwrap();
    zero_all(net.store_mut());
    assert_eq!(
        net.greedy_action(&seq(&[2]), &[seq(&[3]), seq(&[4]), seq(&[5])])
            .unwrap(),
        0
    );
    let net = QNetwork::new(10, small_invdy(EncoderKind::Mean), &mut rng(4)).unwrap();
    let valid = [seq(&[3]), seq(&[4]), seq(&[5])];
    let q = net.q_values(&seq(&[2]), &valid).unwrap();
    let p = net.policy_distribution(&seq(&[2]), &valid).unwrap();
    assert_eq!(crate::nn::argmax(&q), crate::nn::argmax(&p));
}

#[test]
fn losses_vanish_with_a_single_word() {
    for kind in [EncoderKind::Mean, EncoderKind::Gru] {
        let net = QNetwork::new(1, small_invdy(kind), &mut rng(5)).unwrap();
        let a = seq(&[0]);
        assert_eq!(net.inv_dynamics_loss(&a, &a, &a).unwrap(), 0.0);
        assert_eq!(net.decoder_loss(&a).unwrap(), 0.0);
    }
}

#[test]
fn auxiliary_losses_are_non_negative() {
    let net = QNetwork::new(12, small_invdy(EncoderKind::Gru), &mut rng(6)).unwrap();
    for i in 2..12u16 {
        let a = seq(&[i, (i + 3) % 12]);
        assert!(net.inv_dynamics_loss(&seq(&[i]), &a, &seq(&[(i + 1) % 12])).unwrap() >= 0.0);
        assert!(net.decoder_loss(&a).unwrap() >= 0.0);
    }
}

fn terminal_and_open_batch() -> Vec<Arc<Transition>> {
    let valid = vec![seq(&[4]), seq(&[5, 6])];
    vec![
        transition(seq(&[2, 3]), valid.clone(), 0, 5.0, seq(&[3]), vec![], true),
        transition(seq(&[2, 3]), valid.clone(), 1, 1.0, seq(&[3, 7]), valid, false),
    ]
}

#[test]
fn td_targets_by_hand() {
    let mut net = QNetwork::new(10, small_invdy(EncoderKind::Mean), &mut rng(7)).unwrap();
    let s = net.store_mut();
    let w = s.id("q.1.w").unwrap();
    s.value_mut(w).fill(0.0);
    set(s, "q.1.b", &[2.0]);
    let y = net
        .td_targets(&terminal_and_open_batch(), &IntrinsicConfig::ZERO)
        .unwrap();
    assert_eq!(y[0], 5.0);
    assert!((y[1] - 2.8).abs() < 1e-12);
}

#[test]
fn zero_alphas_give_plain_td_loss() {
    let mut net = QNetwork::new(10, small_invdy(EncoderKind::Gru), &mut rng(8)).unwrap();
    let batch = terminal_and_open_batch();
    let y = net.td_targets(&batch, &IntrinsicConfig::ZERO).unwrap();
    let direct: f64 = batch
        .iter()
        .zip(&y)
        .map(|(t, y)| {
            let q = net.q_values(&t.observation, &t.valid).unwrap()[t.action];
            (y - q).powi(2)
        })
        .sum::<f64>()
        / batch.len() as f64;
    let report = net.td_update(&batch, &IntrinsicConfig::ZERO).unwrap();
    assert!((report.total - direct).abs() < 1e-12);
    assert_eq!(report.td, report.total);
    assert_eq!((report.inv, report.dec, report.bonus), (0.0, 0.0, 0.0));
    assert!(net.td_update(&[], &IntrinsicConfig::ZERO).is_err());
}

#[test]
fn intrinsic_bonus_enters_the_target() {
    let net = QNetwork::new(10, small_invdy(EncoderKind::Mean), &mut rng(9)).unwrap();
    let batch = terminal_and_open_batch();
    let cfg = IntrinsicConfig {
        alpha1: 2.0,
        ..IntrinsicConfig::ZERO
    };
    let plain = net.td_targets(&batch, &IntrinsicConfig::ZERO).unwrap();
    let boosted = net.td_targets(&batch, &cfg).unwrap();
    for (t, (p, b)) in batch.iter().zip(plain.iter().zip(&boosted)) {
        let l = net
            .inv_dynamics_loss(&t.observation, t.action_tokens(), &t.next_observation)
            .unwrap();
        assert!((b - p - 2.0 * l).abs() < 1e-12);
    }
}

#[test]
fn next_state_max_uses_only_next_valid_set() {
    let mut net = QNetwork::new(10, small_invdy(EncoderKind::Mean), &mut rng(10)).unwrap();
    let obs = seq(&[2]);
    let next = seq(&[3]);
    let all = [seq(&[4]), seq(&[5]), seq(&[6]), seq(&[7])];
    let q_next = net.q_values(&next, &all).unwrap();
    // restrict the next valid set to the worst candidate
    let worst = (0..4).min_by(|&a, &b| q_next[a].total_cmp(&q_next[b])).unwrap();
    let t = transition(
        obs.clone(),
        vec![seq(&[4])],
        0,
        0.0,
        next,
        vec![all[worst].clone()],
        false,
    );
    let y = net.td_targets(&[t], &IntrinsicConfig::ZERO).unwrap()[0];
    assert!((y - net.gamma() * q_next[worst]).abs() < 1e-12);
    let _ = net.store_mut();
}

#[test]
fn gradients_match_finite_differences() {
    let batch = terminal_and_open_batch();
    for (i, kind) in [EncoderKind::Mean, EncoderKind::Gru].into_iter().enumerate() {
        let mut net = QNetwork::new(10, small_invdy(kind), &mut rng(11 + i as u64)).unwrap();
        let intrinsic = IntrinsicConfig {
            alpha1: 0.7,
            alpha2: 1.3,
            alpha3: 0.6,
        };
        let targets = net.td_targets(&batch, &intrinsic).unwrap();
        let probe = net.clone();
        let report = gradcheck::check(
            net.store_mut(),
            |tape: &mut Tape| {
                probe
                    .objective(tape, &batch, &intrinsic, Some(&targets))
                    .map(|(v, _)| v)
            },
            6,
            &mut rng(99),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{kind:?}: {report:?}");

        let act = seq(&[5, 6, 7]);
        let report = gradcheck::check(
            net.store_mut(),
            |tape: &mut Tape| {
                let o = probe.encode_observation(tape, &seq(&[2, 3]))?;
                let n = probe.encode_observation(tape, &seq(&[3, 8]))?;
                probe.inv_loss_from_encodings(tape, o, n, &act)
            },
            6,
            &mut rng(98),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{kind:?}: {report:?}");
    }
}

#[test]
fn decoder_loss_falls_with_training() {
    let actions = [seq(&[4, 5]), seq(&[6]), seq(&[7, 8, 9])];
    let mut drops = Vec::new();
    for s in 0..5 {
        let mut net = QNetwork::new(
            10,
            InvDyConfig {
                embed_dim: 8,
                hidden: 8,
                lr: 1e-2,
                ..InvDyConfig::default()
            },
            &mut rng(20 + s),
        )
        .unwrap();
        let batch: Vec<_> = actions
            .iter()
            .map(|a| transition(seq(&[2]), vec![a.clone()], 0, 0.0, seq(&[3]), vec![], true))
            .collect();
        let mean = |n: &QNetwork| actions.iter().map(|a| n.decoder_loss(a).unwrap()).sum::<f64>();
        let before = mean(&net);
        let cfg = IntrinsicConfig {
            alpha3: 1.0,
            ..IntrinsicConfig::ZERO
        };
        for _ in 0..200 {
            net.td_update(&batch, &cfg).unwrap();
        }
        drops.push(before - mean(&net));
    }
    drops.sort_by(f64::total_cmp);
    assert!(drops[2] > 0.0, "{drops:?}");
}

/// Three rooms in a row; `go` advances (the last `go` ends the episode with
/// reward 1), `stay` does nothing.
fn chain_transitions() -> Vec<Arc<Transition>> {
    let go = seq(&[5]);
    let stay = seq(&[6, 7]);
    let valid = vec![go.clone(), stay.clone()];
    let room = |i: u16| seq(&[2 + i, 8]);
    let mut out = Vec::new();
    for i in 0..3u16 {
        let last = i == 2;
        let next_valid = if last { vec![] } else { valid.clone() };
        out.push(transition(
            room(i),
            valid.clone(),
            0,
            if last { 1.0 } else { 0.0 },
            room(i + 1),
            next_valid,
            last,
        ));
        out.push(transition(
            room(i),
            valid.clone(),
            1,
            0.0,
            room(i),
            valid.clone(),
            false,
        ));
    }
    out
}

fn chain_fixed_point(gamma: f64) -> Vec<[f64; 2]> {
    let mut v = [0.0f64; 4];
    let mut q = vec![[0.0; 2]; 3];
    for _ in 0..1000 {
        for i in 0..3 {
            let go = if i == 2 { 1.0 } else { gamma * v[i + 1] };
            q[i] = [go, gamma * v[i]];
        }
        for i in 0..3 {
            v[i] = q[i][0].max(q[i][1]);
        }
    }
    q
}

#[test]
fn td_on_a_tiny_chain_reaches_value_iteration() {
    let mut net = QNetwork::new(
        10,
        InvDyConfig {
            embed_dim: 8,
            hidden: 16,
            lr: 1e-2,
            ..InvDyConfig::default()
        },
        &mut rng(30),
    )
    .unwrap();
    let batch = chain_transitions();
    for _ in 0..5000 {
        net.td_update(&batch, &IntrinsicConfig::ZERO).unwrap();
    }
    let oracle = chain_fixed_point(net.gamma());
    for i in 0..3 {
        let t = &batch[2 * i];
        let q = net.q_values(&t.observation, &t.valid).unwrap();
        for a in 0..2 {
            assert!(
                (q[a] - oracle[i][a]).abs() < 0.05,
                "room {i} action {a}: {} vs {}",
                q[a],
                oracle[i][a]
            );
        }
    }
}

#[test]
fn context_layout() {
    let c = build_context(None, Some(&[Token(7), Token(8)]), &[Token(3)]);
    assert_eq!(&*c, &[Token::PAD, Token::SEP, Token(7), Token(8), Token::SEP, Token(3)]);
    let [a, b, o] = split_context(&c).unwrap();
    assert_eq!(
        (a, b, o),
        (&[Token::PAD][..], &[Token(7), Token(8)][..], &[Token(3)][..])
    );
    assert!(split_context(&[Token(3)]).is_err());
}

#[test]
fn untrained_zero_model_is_uniform() {
    let mut m = IlModel::new(10, small_il(EncoderKind::Mean), &mut rng(40)).unwrap();
    zero_all(m.store_mut());
    let c = build_context(None, None, &seq(&[2, 3]));
    let p = m
        .il_distribution(&c, &[seq(&[4]), seq(&[5]), seq(&[6]), seq(&[7])])
        .unwrap();
    assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    assert_eq!(m.il_distribution(&c, &[seq(&[4])]).unwrap(), vec![1.0]);
    assert!(m.il_distribution(&c, &[]).is_err());
}

#[test]
fn il_gradients_match_finite_differences() {
    let data: Vec<IlExample> = terminal_and_open_batch()
        .iter()
        .map(|t| IlExample::from(t.as_ref()))
        .collect();
    for (i, kind) in [EncoderKind::Mean, EncoderKind::Gru].into_iter().enumerate() {
        let mut m = IlModel::new(10, small_il(kind), &mut rng(41 + i as u64)).unwrap();
        let probe = m.clone();
        let refs: Vec<&IlExample> = data.iter().collect();
        let report = gradcheck::check(
            m.store_mut(),
            |tape: &mut Tape| probe.objective(tape, &refs),
            8,
            &mut rng(3),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{kind:?}: {report:?}");
    }
}

pub(crate) fn scaled_il() -> IlConfig {
    IlConfig {
        embed_dim: 16,
        hidden: 16,
        lr: 1e-2,
        optimizer: Optimizer::default(),
        ..IlConfig::default()
    }
}

/// Plays the walkthrough of the default depth-8 game and records it.
fn walkthrough_trajectory() -> Trajectory {
    let mut game = generate_game(&GameSpec::bottleneck_chain(0)).unwrap();
    let mut r = game.reset().unwrap();
    let walk = game.walkthrough();
    let mut steps = Vec::new();
    let mut hist: Vec<Seq> = Vec::new();
    for (i, a) in walk.iter().enumerate() {
        let valid: Vec<Seq> = r.valid_actions.iter().map(|c| c.tokens.clone()).collect();
        let n = hist.len();
        let context = build_context(
            n.checked_sub(2).map(|k| &hist[k][..]),
            n.checked_sub(1).map(|k| &hist[k][..]),
            &r.observation.tokens,
        );
        let obs = r.observation.tokens.clone();
        let next = game.step(a).unwrap();
        steps.push(Arc::new(Transition {
            context,
            observation: obs,
            valid: valid.into(),
            action: a.id,
            reward: next.reward,
            next_observation: next.observation.tokens.clone(),
            next_valid: next
                .valid_actions
                .iter()
                .map(|c| c.tokens.clone())
                .collect::<Vec<_>>()
                .into(),
            terminal: next.done,
            trajectory_id: 0,
            step: i,
        }));
        hist.push(a.tokens.clone());
        r = next;
    }
    Trajectory::new(0, steps)
}

#[test]
fn imitation_reproduces_a_single_trajectory() {
    let traj = Arc::new(walkthrough_trajectory());
    assert_eq!(traj.len(), 8);
    let buffer = TrajectoryBuffer::new(vec![traj.clone()]);
    let vocab = generate_game(&GameSpec::bottleneck_chain(0)).unwrap().vocab().len();
    let mut m = IlModel::new(vocab, scaled_il(), &mut rng(50)).unwrap();
    let data = examples(&buffer);
    let before = m.mean_loss(&data).unwrap();
    let curve = m.train_il(&buffer, &mut rng(51)).unwrap();
    assert_eq!(curve.len(), 40);
    assert!(m.mean_loss(&data).unwrap() <= before);
    for t in &traj.steps {
        let p = m.il_distribution(&t.context, &t.valid).unwrap();
        assert_eq!(crate::nn::argmax(&p), Some(t.action));
    }
}

#[test]
fn conflicting_examples_split_by_frequency() {
    let valid: Arc<[Seq]> = vec![seq(&[4]), seq(&[5]), seq(&[6])].into();
    let context = build_context(None, None, &seq(&[2, 3]));
    let ex = |a| IlExample {
        context: context.clone(),
        valid: valid.clone(),
        action: a,
    };
    let data = vec![ex(1), ex(1), ex(1), ex(0)];
    let mut m = IlModel::new(10, scaled_il(), &mut rng(60)).unwrap();
    m.train_examples(&data, &mut rng(61)).unwrap();
    let p = m.il_distribution(&context, &valid).unwrap();
    assert!(p[1] > p[0] && p[0] > p[2], "{p:?}");
    assert!(m.train_examples(&[], &mut rng(0)).is_err());
}

#[test]
fn training_lowers_the_loss() {
    let traj = Arc::new(walkthrough_trajectory());
    let buffer = TrajectoryBuffer::new(vec![traj; 3]);
    let data = examples(&buffer);
    let mut gains = Vec::new();
    for s in 0..5 {
        let mut m = IlModel::new(200, scaled_il(), &mut rng(70 + s)).unwrap();
        let before = m.mean_loss(&data).unwrap();
        m.config_mut().warm_start = true;
        m.train_il(&buffer, &mut rng(80 + s)).unwrap();
        gains.push(before - m.mean_loss(&data).unwrap());
    }
    gains.sort_by(f64::total_cmp);
    assert!(gains[2] >= 0.0);
}
