use std::time::{Duration, Instant};

use plclink::events::{Event, EventKind};
use plclink::plant::{
    check_trace, run_scenario, run_scenario_with, ScenarioConfig, ScenarioError, Violation,
};

fn config(cycles: u32) -> ScenarioConfig {
    ScenarioConfig {
        cycles,
        ..ScenarioConfig::default()
    }
}

/// Position of the first event after `from` satisfying `pred`.
fn find_after(events: &[Event], from: usize, pred: impl Fn(&Event) -> bool) -> Option<usize> {
    events
        .iter()
        .enumerate()
        .skip(from)
        .find(|(_, e)| pred(e))
        .map(|(i, _)| i)
}

fn is(actor: &'static str, name: &'static str) -> impl Fn(&Event) -> bool {
    move |e| e.actor == actor && e.kind.name() == name
}

#[test]
fn one_cycle_follows_the_handshake_chain() {
    let report = run_scenario(&config(1)).unwrap();
    assert_eq!(report.cycles_completed, 1);
    assert!(report.violations.is_empty(), "{:?}", report.violations);
    let ev = &report.events;
    let flag = find_after(ev, 0, |e| {
        e.actor == "plc1" && e.kind == EventKind::FlagSet { register: 0 }
    })
    .unwrap();
    let publish = find_after(ev, flag, |e| {
        e.actor == "gw1"
            && matches!(&e.kind, EventKind::Publish { payload, .. } if payload == &[0, 1])
    })
    .unwrap();
    let receive = find_after(ev, publish, |e| {
        e.actor == "gw2"
            && e.kind
                == EventKind::Receive {
                    payload: vec![0, 1],
                }
    })
    .unwrap();
    let fc05 = find_after(ev, receive, |e| {
        e.actor == "gw2"
            && matches!(&e.kind, EventKind::CoilWrite { function: 5, states, .. } if states == &[true])
    })
    .unwrap();
    let start = find_after(ev, fc05, is("plc2", "sequence_start")).unwrap();
    let m9 = find_after(ev, start, |e| {
        e.actor == "plc2" && e.kind == EventKind::FlagSet { register: 0 }
    })
    .unwrap();
    let m11 = find_after(ev, m9, |e| {
        e.actor == "plc2" && e.kind == EventKind::FlagSet { register: 1 }
    })
    .unwrap();
    let publish2 = find_after(ev, m11, |e| {
        e.actor == "gw2"
            && matches!(&e.kind, EventKind::Publish { payload, .. } if payload == &[0, 1, 0, 1])
    })
    .unwrap();
    let receive2 = find_after(ev, publish2, |e| {
        e.actor == "gw1"
            && e.kind
                == EventKind::Receive {
                    payload: vec![0, 1, 0, 1],
                }
    })
    .unwrap();
    let fc15 = find_after(ev, receive2, |e| {
        e.actor == "gw1"
            && matches!(&e.kind, EventKind::CoilWrite { function: 15, states, .. } if states == &[true, true])
    })
    .unwrap();
    find_after(ev, fc15, is("plc1", "restart")).unwrap();
    // motor 9 finishes before motor 11
    let done = |m: u8| {
        ev.iter()
            .position(|e| e.kind == EventKind::MotorDone { motor: m })
            .unwrap()
    };
    assert!(done(9) < m9 && done(11) < m11 && done(9) < done(11));
}

#[test]
fn hundred_cycles_conserve_flags() {
    let started = Instant::now();
    let report = run_scenario(&config(100)).unwrap();
    assert!(started.elapsed() < Duration::from_secs(60));
    assert_eq!(report.cycles_completed, 100);
    assert!(report.violations.is_empty());
    let plc1_flags = report
        .events
        .iter()
        .filter(|e| e.actor == "plc1" && e.kind == EventKind::FlagSet { register: 0 })
        .count();
    let plc2_starts = report.count("plc2", "sequence_start");
    assert_eq!(plc1_flags, 100);
    assert_eq!(plc2_starts, 100);
    assert_eq!(report.count("plc1", "restart"), 100);
    assert_eq!(report.errors.total(), 0);
}

#[test]
fn motors_are_commanded_only_by_their_owner() {
    let report = run_scenario(&config(3)).unwrap();
    for e in &report.events {
        if let EventKind::MotorStart { motor } | EventKind::MotorDone { motor } = e.kind {
            let owner = if motor <= 5 { "plc1" } else { "plc2" };
            assert_eq!(e.actor, owner, "{e}");
        }
    }
}

#[test]
fn missing_broker_deadlocks_with_zero_cycles() {
    let mut cfg = config(1);
    cfg.broker.enabled = false;
    cfg.quiescence = Duration::from_secs(5);
    match run_scenario(&cfg) {
        Err(ScenarioError::DeadlockDetected { report, .. }) => {
            assert_eq!(report.cycles_completed, 0);
            assert!(report.errors.mqtt > 0);
        }
        other => panic!("expected deadlock, got {other:?}"),
    }
}

#[test]
fn mutated_traces_are_caught() {
    let report = run_scenario(&config(2)).unwrap();
    assert!(check_trace(&report.events).is_empty());

    let mut moved = report.events.clone();
    let start = moved
        .iter()
        .position(|e| e.actor == "plc2" && e.kind.name() == "sequence_start")
        .unwrap();
    let flag = moved
        .iter()
        .position(|e| e.actor == "plc1" && e.kind == EventKind::FlagSet { register: 0 })
        .unwrap();
    let ev = moved.remove(start);
    moved.insert(flag, ev);
    let v = check_trace(&moved);
    assert_eq!(v.len(), 1, "{v:?}");
    assert!(matches!(v[0], Violation::StartBeforeFlag { .. }));

    let mut duplicated = report.events.clone();
    let publish = duplicated
        .iter()
        .position(|e| e.kind.name() == "publish")
        .unwrap();
    let copy = duplicated[publish].clone();
    duplicated.insert(publish + 1, copy);
    let v = check_trace(&duplicated);
    assert_eq!(v.len(), 1, "{v:?}");
    assert!(matches!(v[0], Violation::PublishWithoutChange { .. }));
}

#[test]
fn corrupted_responses_delay_but_do_not_break_the_handshake() {
    let mut cfg = config(20);
    cfg.faults.corrupt_probability = 0.05;
    cfg.faults.seed = 7;
    cfg.gateway1.modbus.timing.retries = 2;
    cfg.gateway2.modbus.timing.retries = 2;
    let report = run_scenario(&cfg).unwrap();
    assert_eq!(report.cycles_completed, 20);
    assert!(report.violations.is_empty());
    assert!(report.injected.corrupted > 0);
}

#[test]
fn broker_restart_mid_run_recovers() {
    let mut cfg = config(6);
    cfg.quiescence = Duration::from_secs(60);
    let mut killed = false;
    let mut restarted = false;
    let report = run_scenario_with(&cfg, &mut |at, net| {
        if !killed && at >= Duration::from_millis(2500) {
            net.kill_broker();
            killed = true;
        }
        if killed && !restarted && at >= Duration::from_millis(4000) {
            net.start_broker();
            restarted = true;
        }
    })
    .unwrap();
    assert!(restarted);
    assert_eq!(report.cycles_completed, 6);
    assert!(report.violations.is_empty());
    assert!(report.count("gw1", "connected") >= 2);
    assert!(report.count("gw2", "connected") >= 2);
}

#[test]
fn report_renders_events_and_summary() {
    let report = run_scenario(&config(1)).unwrap();
    let text = report.to_string();
    assert!(text.lines().any(|l| l.ends_with("plc1 restart")));
    assert!(text.contains("cycles_completed 1 of 1"));
    assert!(text.trim_end().ends_with("result PASS"));
}

#[test]
fn live_mode_completes_a_cycle_over_sockets() {
    let mut cfg = config(1);
    cfg.broker.listen = "127.0.0.1:0".into();
    cfg.plc1.listen = "127.0.0.1:0".into();
    cfg.plc2.listen = "127.0.0.1:0".into();
    cfg.tick = Duration::from_millis(5);
    cfg.motor_ticks = plclink::plant::MotorTicks::uniform(4);
    cfg.quiescence = Duration::from_secs(10);
    let report = plclink::plant::run_live(&cfg).unwrap();
    assert_eq!(report.cycles_completed, 1);
    assert!(report.violations.is_empty(), "{:?}", report.violations);
    assert!(report.wire.mqtt_publishes >= 4);
    assert_eq!(report.wire.mqtt_retained, 0);
}
