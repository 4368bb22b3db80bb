use std::sync::Arc;

use mci_core::engine::{events_to_ndjson, replay, ActionLog, EventKind, PatientStatus, SimState};
use mci_core::fixtures::{random_small_scenario, random_state};
use mci_core::generate::{generate_scenario, reveal_fraction, GeneratorConfig, SigmoidParams};
use mci_core::metrics::outcome_report;
use mci_core::policy::{encode, ActMode, Action, Caps, MciEnv, Normalization, PolicySpec, P_REQ};
use mci_core::types::{ResourceKind, ResourceVector};
use mci_core::AssignmentSource;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Whether `to` is reachable from `from` without cancellations (one env step
/// may cover several ticks).
fn reachable(from: PatientStatus, to: PatientStatus, time_critical: bool) -> bool {
    use PatientStatus::*;
    let rank = |s| match s {
        Hidden => 0,
        Unassigned => 1,
        Assigned => 2,
        InTransit => 3,
        Admitted | Deceased => 4,
    };
    if from == to {
        return true;
    }
    if matches!(from, Admitted | Deceased) {
        return false;
    }
    if to == Deceased && !time_critical {
        return false;
    }
    rank(to) > rank(from)
}

fn check_state(state: &SimState) {
    for (j, (r, c)) in state.reservations().iter().zip(state.effective_capacity()).enumerate() {
        assert!(r.fits_within(c), "hospital {j}: reserved {r:?} exceeds {c:?}");
    }
    assert!(state.ambulances_busy().len() as u32 <= state.fleet_size());
    let times: Vec<u32> = state.event_log().iter().map(|e| e.time).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]), "timestamps go backwards");
    let seqs: Vec<u64> = state.event_log().iter().map(|e| e.seq).collect();
    assert!(seqs.iter().enumerate().all(|(i, s)| *s == i as u64));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_play_keeps_engine_invariants(seed in any::<u64>(), patients in 10usize..40) {
        let config = GeneratorConfig { seed, patient_count: patients, fleet_size_max: 3, ..GeneratorConfig::default() };
        let scenario = Arc::new(generate_scenario(&config).unwrap());
        let caps = Caps::new(patients, config.hospital_count);
        let mut env = MciEnv::new(scenario.clone(), caps, Normalization::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut before: Vec<PatientStatus> = env.state().patients().iter().map(|p| p.status).collect();
        let mut reward_sum = env.total_reward;
        while !env.is_done() {
            let (obs, mask) = env.observe();
            let out = PolicySpec::Random.act(env.state(), &obs, &mask, ActMode::Sample, &mut rng);
            let step = env.step(out.action).unwrap();
            let parts: f64 = step.reward.per_patient.iter().map(|p| p.reward).sum();
            prop_assert_eq!(parts, step.reward.total);
            reward_sum += step.reward.total;
            check_state(env.state());
            for (i, rec) in env.state().patients().iter().enumerate() {
                let tc = scenario.patients[i].severity.is_time_critical();
                prop_assert!(reachable(before[i], rec.status, tc), "{:?} -> {:?}", before[i], rec.status);
                before[i] = rec.status;
            }
        }
        prop_assert!((reward_sum - env.total_reward).abs() < 1e-9);
        let report = outcome_report(env.state().event_log()).unwrap();
        prop_assert!((0.0..=100.0).contains(&report.mortality_rate));
        prop_assert!((0.0..=100.0).contains(&report.match_rate));
        prop_assert_eq!(report.deaths as usize, env.state().deaths());
    }

    #[test]
    fn replay_reproduces_the_log(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scenario = random_small_scenario(&mut rng, 6, 4);
        let live = random_state(&mut rng, scenario.clone());
        let log = ActionLog::from_events(live.event_log(), Some(live.clock()));
        let again = replay(Arc::new(scenario), &log).unwrap();
        prop_assert_eq!(events_to_ndjson(again.event_log()), events_to_ndjson(live.event_log()));
    }

    #[test]
    fn deceased_is_absorbing(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scenario = random_small_scenario(&mut rng, 6, 3);
        let mut state = random_state(&mut rng, scenario);
        let dead: Vec<usize> = state.patients().iter().enumerate()
            .filter(|(_, p)| p.status == PatientStatus::Deceased).map(|(i, _)| i).collect();
        for _ in 0..5 {
            state.step(rng.gen_range(1..50)).unwrap();
            for &i in &dead {
                prop_assert_eq!(state.patients()[i].status, PatientStatus::Deceased);
            }
        }
    }
}

#[test]
fn mask_is_sound_and_complete_over_fuzzed_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let caps = Caps::new(6, 4);
    let mut pairs = 0usize;
    while pairs < 100_000 {
        let scenario = random_small_scenario(&mut rng, 6, 4);
        let state = random_state(&mut rng, scenario);
        let (_, mask) = encode(&state, caps, &Normalization::default()).unwrap();
        let np = state.patients().len();
        let nh = state.scenario().hospitals.len();
        for pi in 0..np {
            for hi in 0..nh {
                let mut probe = state.without_log();
                let (p, h) = (state.scenario().patients[pi].id, state.scenario().hospitals[hi].id);
                let accepted = probe.assign(p, h, AssignmentSource::Manual).is_ok();
                assert_eq!(mask.get(pi, hi), accepted, "pair ({pi},{hi}) at t={}", state.clock());
                pairs += 1;
            }
        }
        // Policies only ever pick admitted actions.
        for policy in [PolicySpec::Random, PolicySpec::Greedy] {
            let (obs, mask) = encode(&state, caps, &Normalization::default()).unwrap();
            let out = policy.act(&state, &obs, &mask, ActMode::Sample, &mut rng);
            if let Action::Assign { patient_slot, hospital_slot } = out.action {
                let mut probe = state.without_log();
                let (p, h) = (state.scenario().patients[patient_slot].id, state.scenario().hospitals[hospital_slot].id);
                assert!(probe.assign(p, h, AssignmentSource::Policy).is_ok());
            }
        }
    }
}

#[test]
fn reveal_fraction_is_bounded_and_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1_000_000 {
        let floor = rng.gen_range(0.0..0.9);
        let params = SigmoidParams::new(rng.gen_range(0.0..500.0), rng.gen_range(1e-3..5.0), floor, rng.gen_range(floor + 1e-3..=1.0));
        let t = rng.gen_range(0.0..1000.0);
        let dt = rng.gen_range(0.0..50.0);
        let (a, b) = (reveal_fraction(t, &params), reveal_fraction(t + dt, &params));
        assert!(a >= params.floor && a <= params.ceiling);
        assert!(b >= a);
    }
}

#[test]
fn canonical_kind_order_is_shared_by_json_and_observation() {
    for kind in ResourceKind::ALL {
        let v = ResourceVector::from_kinds(&[kind]);
        let json: Vec<u32> = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(json.iter().position(|x| *x == 1), Some(kind.index()));

        let mut reqs = [0u32; 8];
        reqs[kind.index()] = 1;
        let s = mci_core::fixtures::ScenarioBuilder::new()
            .patient(mci_core::SeverityCode::Minor, reqs, 0)
            .hospital(1, [1; 8], 5)
            .build();
        let state = SimState::new(Arc::new(s)).unwrap();
        let (obs, _) = encode(&state, Caps::new(1, 1), &Normalization::default()).unwrap();
        let bits = &obs.patient(0)[P_REQ..P_REQ + 8];
        assert_eq!(bits.iter().position(|x| *x == 1.0), Some(kind.index()));
    }
    assert!(ResourceKind::ALL.iter().enumerate().all(|(i, k)| k.index() == i));
}

#[test]
fn generated_logs_carry_complete_assignment_payloads() {
    let scenario = Arc::new(generate_scenario(&GeneratorConfig::default()).unwrap());
    let mut env = MciEnv::new(scenario, Caps::new(20, 4), Normalization::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    while !env.is_done() {
        let (obs, mask) = env.observe();
        let out = PolicySpec::Greedy.act(env.state(), &obs, &mask, ActMode::Argmax, &mut rng);
        env.step(out.action).unwrap();
    }
    for e in env.state().event_log() {
        if let EventKind::Assigned { required, matched, .. } = &e.kind {
            assert!(required.is_binary() && matched.is_binary());
            assert!(matched.fits_within(required));
            assert!(e.severity_color.is_some());
        }
    }
}
