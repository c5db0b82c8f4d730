//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use plclink::events::{Event, EventKind, EventLog};
use plclink::gateway::{Gateway, GatewayConfig};
use plclink::modbus::{
    crc16, decode_adu, Direction, FaultPlan, FramingMode, Pdu, Role, RtuFrame, SerialParams,
    SimSerialLink, Slave, SlaveAddress, StoreLayout,
};
use plclink::mqtt::codec::decode_remaining_length;
use plclink::mqtt::{
    decode_packet, encode_packet, encode_remaining_length, ConnectReturnCode, MqttDirection,
    MqttPacket, Publish, SimNetwork, SubackCode, TopicFilter, TopicName,
};
use plclink::plant::{check_trace, run_scenario, ScenarioConfig, ScenarioReport};
use plclink::Clock;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const CRC_MODBUS: crc::Crc<u16> = crc::Crc::<u16>::new(&crc::CRC_16_MODBUS);

/// Bit-at-a-time CRC-16/MODBUS.
fn crc_bitwise(data: &[u8]) -> u16 {
    let mut crc = 0xFFFFu16;
    for &b in data {
        crc ^= u16::from(b);
        for _ in 0..8 {
            crc = if crc & 1 == 1 {
                (crc >> 1) ^ 0xA001
            } else {
                crc >> 1
            };
        }
    }
    crc
}

fn random_request(rng: &mut ChaCha8Rng, i: usize) -> RtuFrame {
    let slave = SlaveAddress::new(rng.gen_range(0..=247)).unwrap();
    match i % 3 {
        0 => {
            let qty = *[1u16, 125, rng.gen_range(1..=125)].choose(rng).unwrap();
            let start = rng.gen_range(0..=u16::MAX - (qty - 1));
            RtuFrame::read_holding_registers(slave, start, qty).unwrap()
        }
        1 => RtuFrame::write_single_coil(slave, rng.gen(), rng.gen()),
        _ => {
            let qty = *[1u16, 1968, rng.gen_range(1..=1968)].choose(rng).unwrap();
            let start = rng.gen_range(0..=u16::MAX - (qty - 1));
            let states = (0..qty).map(|_| rng.gen()).collect();
            RtuFrame::write_multiple_coils(slave, start, states).unwrap()
        }
    }
}

fn random_response(rng: &mut ChaCha8Rng, i: usize) -> RtuFrame {
    let slave = SlaveAddress::new(rng.gen_range(1..=247)).unwrap();
    let pdu = match i % 3 {
        0 => {
            let qty = *[1usize, 125, rng.gen_range(1..=125)].choose(rng).unwrap();
            Pdu::ReadHoldingRegistersResp {
                registers: (0..qty).map(|_| rng.gen()).collect(),
            }
        }
        1 => Pdu::WriteSingleCoilResp {
            address: rng.gen(),
            state: rng.gen(),
        },
        _ => Pdu::WriteMultipleCoilsResp {
            start: rng.gen_range(0..=u16::MAX - 1967),
            quantity: *[1u16, 1968, rng.gen_range(1..=1968)].choose(rng).unwrap(),
        },
    };
    RtuFrame::new(slave, pdu).unwrap()
}

fn codec_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for b in 0..=255u8 {
        let (t, w, c) = (crc16(&[b]), crc_bitwise(&[b]), CRC_MODBUS.checksum(&[b]));
        ensure(t == w && t == c, || {
            format!("byte {b:#04x}: table {t:04x} bitwise {w:04x} oracle {c:04x}")
        })?;
    }
    for _ in 0..10_000 {
        let len = rng.gen_range(0..300);
        let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let (t, w, c) = (crc16(&data), crc_bitwise(&data), CRC_MODBUS.checksum(&data));
        ensure(t == w && t == c, || {
            format!("input {data:02x?}: table {t:04x} bitwise {w:04x}")
        })?;
    }
    let mut frames = 0;
    for i in 0..6_000 {
        let req = random_request(&mut rng, i);
        let decoded =
            decode_adu(&req.encode(), Role::Slave).map_err(|e| format!("{req:?}: {e}"))?;
        ensure(decoded == req, || {
            format!("request roundtrip changed {req:?}")
        })?;
        let resp = random_response(&mut rng, i);
        let decoded =
            decode_adu(&resp.encode(), Role::Master).map_err(|e| format!("{resp:?}: {e}"))?;
        ensure(decoded == resp, || {
            format!("response roundtrip changed {resp:?}")
        })?;
        frames += 2;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "10256 CRC inputs agree, {frames} frames roundtrip, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn slave_silence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let address = SlaveAddress::new(1).unwrap();
    let mut slave = Slave::new(
        address,
        StoreLayout::default(),
        FramingMode::Boundary,
        &SerialParams::default(),
    );
    let mut emitted = 0usize;
    let mut tested = 0usize;
    let mut i = 0usize;
    while tested < 10_000 {
        let frame = match i % 3 {
            0 => RtuFrame::read_holding_registers(address, rng.gen_range(0..16), 1).unwrap(),
            1 => RtuFrame::write_single_coil(address, rng.gen_range(0..16), rng.gen()),
            _ => RtuFrame::write_multiple_coils(address, 0, vec![rng.gen(), rng.gen()]).unwrap(),
        };
        i += 1;
        let mut adu = frame.encode();
        for _ in 0..rng.gen_range(1..=3) {
            let bit = rng.gen_range(0..adu.len() * 8);
            adu[bit / 8] ^= 1 << (bit % 8);
        }
        // a residue of zero means the damage produced another valid frame
        if crc16(&adu) == 0 {
            continue;
        }
        tested += 1;
        emitted += slave.on_frame(&adu).map_or(0, |r| r.len());
    }
    ensure(emitted == 0, || format!("{emitted} response bytes"))?;
    Ok(format!("{tested} corrupted frames, 0 response bytes"))
}

/// Reference MQTT variable-length encoding.
fn remaining_length_oracle(mut n: u32) -> Vec<u8> {
    let mut out = Vec::new();
    loop {
        let mut byte = (n % 128) as u8;
        n /= 128;
        if n > 0 {
            byte |= 0x80;
        }
        out.push(byte);
        if n == 0 {
            return out;
        }
    }
}

fn random_topic(rng: &mut ChaCha8Rng) -> String {
    let parts = rng.gen_range(1..4);
    (0..parts)
        .map(|_| {
            let len = rng.gen_range(1..8);
            (0..len)
                .map(|_| rng.gen_range(b'a'..=b'z') as char)
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("/")
}

fn random_packet(rng: &mut ChaCha8Rng) -> MqttPacket {
    match rng.gen_range(0..8) {
        0 => MqttPacket::Connect {
            client_id: random_topic(rng).replace('/', ""),
            keepalive: rng.gen(),
            clean_session: rng.gen(),
        },
        1 => MqttPacket::Connack {
            return_code: ConnectReturnCode::from_u8(rng.gen_range(0..=5)).unwrap(),
        },
        2 => {
            let len = rng.gen_range(0..300);
            let mut p = Publish::new(
                TopicName::new(random_topic(rng)).unwrap(),
                (0..len).map(|_| rng.gen()).collect::<Vec<u8>>(),
            );
            p.retain = rng.gen();
            MqttPacket::Publish(p)
        }
        3 => MqttPacket::Subscribe {
            packet_id: rng.gen_range(1..=u16::MAX),
            filters: (0..rng.gen_range(1..4))
                .map(|_| (TopicFilter::new(random_topic(rng)).unwrap(), 0))
                .collect(),
        },
        4 => MqttPacket::Suback {
            packet_id: rng.gen_range(1..=u16::MAX),
            granted: (0..rng.gen_range(1..4))
                .map(|_| {
                    if rng.gen() {
                        SubackCode::Granted(0)
                    } else {
                        SubackCode::Failure
                    }
                })
                .collect(),
        },
        5 => MqttPacket::Pingreq,
        6 => MqttPacket::Pingresp,
        _ => MqttPacket::Disconnect,
    }
}

fn mqtt_conformance() -> Outcome {
    for n in 0..=65_536u32 {
        let bytes = encode_remaining_length(n).map_err(|e| e.to_string())?;
        ensure(bytes == remaining_length_oracle(n), || {
            format!("{n} encodes to {bytes:02x?}")
        })?;
        let (back, used) = decode_remaining_length(&bytes).map_err(|e| format!("{n}: {e}"))?;
        ensure(back == n && used == bytes.len(), || {
            format!("{n} decodes to {back}")
        })?;
    }
    for (packet, wire) in [
        (MqttPacket::Pingreq, [0xC0u8, 0x00]),
        (MqttPacket::Pingresp, [0xD0, 0x00]),
        (MqttPacket::Disconnect, [0xE0, 0x00]),
    ] {
        let bytes = encode_packet(&packet);
        ensure(bytes == wire, || {
            format!("{} encodes to {bytes:02x?}", packet.name())
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let packet = random_packet(&mut rng);
        let bytes = encode_packet(&packet);
        let (back, used) = decode_packet(&bytes).map_err(|e| format!("{packet:?}: {e}"))?;
        ensure(back == packet && used == bytes.len(), || {
            format!("{packet:?} came back as {back:?}")
        })?;
    }
    Ok("65537 lengths, 2-byte control packets, 10000 packets roundtrip".into())
}

fn retain_discipline(report: &ScenarioReport) -> Outcome {
    let publishes: Vec<_> = report
        .mqtt_trace
        .iter()
        .filter(|e| e.is_publish())
        .collect();
    ensure(!publishes.is_empty(), || "no publishes in the trace".into())?;
    let retained = publishes.iter().filter(|e| e.bytes[0] & 0x01 != 0).count();
    ensure(retained == 0, || format!("{retained} retained publishes"))?;
    Ok(format!("{} PUBLISH frames, none retained", publishes.len()))
}

fn publish_on_change() -> Outcome {
    let run = |changes: &[(usize, u16)], polls: usize| -> Result<(usize, u64), String> {
        let clock = Clock::sim();
        let net = SimNetwork::new(clock.clone());
        let config = GatewayConfig::first_plc();
        let serial = config.modbus.serial;
        let plc = Arc::new(Mutex::new(Slave::new(
            config.modbus.slave(),
            StoreLayout::default(),
            FramingMode::Boundary,
            &serial,
        )));
        let link = SimSerialLink::new(plc.clone(), serial, FramingMode::Boundary, clock.clone());
        let connector = net.connector("gw1");
        let mut gw = Gateway::new(config, link, connector, clock.clone(), EventLog::new());
        gw.ensure_connected().map_err(|e| e.to_string())?;
        for poll in 0..polls {
            if let Some((_, v)) = changes.iter().find(|(at, _)| *at == poll) {
                plc.lock().unwrap().store_mut().set_register(0, *v);
            }
            gw.poll_cycle().map_err(|e| e.to_string())?;
            clock.advance(Duration::from_millis(50));
        }
        let on_wire = net
            .trace()
            .entries()
            .iter()
            .filter(|e| e.direction == MqttDirection::ToBroker && e.is_publish())
            .count();
        Ok((on_wire, gw.stats().polls))
    };
    let (constant, polls) = run(&[], 1000)?;
    ensure(constant == 1 && polls == 1000, || {
        format!("{constant} publishes over {polls} polls")
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut value = 0u16;
    let mut changes = Vec::new();
    for poll in 1..1000 {
        if rng.gen_bool(0.05) {
            value = value.wrapping_add(rng.gen_range(1..=u16::MAX));
            changes.push((poll, value));
        }
    }
    let k = changes.len();
    let (changed, _) = run(&changes, 1000)?;
    ensure(changed == k + 1, || {
        format!("{changed} publishes for {k} changes")
    })?;
    Ok(format!(
        "constant: 1 publish / 1000 polls; {k} changes: {changed} publishes"
    ))
}

fn find_after(events: &[Event], from: usize, pred: impl Fn(&Event) -> bool) -> Option<usize> {
    events
        .iter()
        .enumerate()
        .skip(from)
        .find(|(_, e)| pred(e))
        .map(|(i, _)| i)
}

/// Checks that every cycle walks flag, notify, sequence, motor flags, restart.
fn narrative_order(events: &[Event], cycles: u32) -> Result<(), String> {
    let mut pos = 0;
    for cycle in 1..=cycles {
        let step = |pos: usize, what: &str, pred: &dyn Fn(&Event) -> bool| {
            find_after(events, pos, pred)
                .ok_or_else(|| format!("cycle {cycle}: no {what} after event {pos}"))
        };
        pos = step(pos, "plc1 flag", &|e| {
            e.actor == "plc1" && e.kind == EventKind::FlagSet { register: 0 }
        })?;
        pos = step(pos, "gw1 notify", &|e| {
            e.actor == "gw1"
                && matches!(&e.kind, EventKind::Publish { payload, .. } if payload == &[0, 1])
        })?;
        pos = step(pos, "fc05 write", &|e| {
            e.actor == "gw2"
                && matches!(&e.kind, EventKind::CoilWrite { function: 5, states, .. } if states == &[true])
        })?;
        pos = step(pos, "plc2 sequence", &|e| {
            e.actor == "plc2" && e.kind == EventKind::SequenceStart
        })?;
        pos = step(pos, "motor 9", &|e| {
            e.kind == EventKind::MotorDone { motor: 9 }
        })?;
        pos = step(pos, "plc2 flag 0", &|e| {
            e.actor == "plc2" && e.kind == EventKind::FlagSet { register: 0 }
        })?;
        pos = step(pos, "motor 11", &|e| {
            e.kind == EventKind::MotorDone { motor: 11 }
        })?;
        pos = step(pos, "plc2 flag 1", &|e| {
            e.actor == "plc2" && e.kind == EventKind::FlagSet { register: 1 }
        })?;
        pos = step(pos, "fc15 write", &|e| {
            e.actor == "gw1"
                && matches!(&e.kind, EventKind::CoilWrite { function: 15, states, .. } if states == &[true, true])
        })?;
        pos = step(pos, "plc1 restart", &|e| {
            e.actor == "plc1" && e.kind == EventKind::Restart
        })?;
    }
    Ok(())
}

fn end_to_end(report: &ScenarioReport, elapsed: Duration) -> Outcome {
    ensure(report.cycles_completed == 100, || {
        format!("{} of 100 cycles", report.cycles_completed)
    })?;
    let violations = check_trace(&report.events);
    ensure(violations.is_empty(), || {
        format!("{} violations, first: {}", violations.len(), violations[0])
    })?;
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    narrative_order(&report.events, 100)?;
    Ok(format!(
        "100 cycles, 0 violations, narrative order holds, {:.2}s wall, {:.1}s simulated",
        elapsed.as_secs_f64(),
        report.sim_time.as_secs_f64()
    ))
}

fn fault_tolerance() -> Outcome {
    let mut config = ScenarioConfig {
        cycles: 50,
        faults: FaultPlan {
            corrupt_probability: 0.01,
            seed: 7,
            ..FaultPlan::default()
        },
        ..ScenarioConfig::default()
    };
    config.gateway1.modbus.timing.retries = 2;
    config.gateway2.modbus.timing.retries = 2;
    let report = run_scenario(&config).map_err(|e| e.to_string())?;
    ensure(report.cycles_completed == 50, || {
        format!("{} of 50 cycles", report.cycles_completed)
    })?;
    ensure(report.violations.is_empty(), || {
        format!("violations: {:?}", report.violations)
    })?;
    ensure(report.injected.corrupted > 0, || {
        "no frame was corrupted".into()
    })?;
    Ok(format!(
        "50 cycles, 0 violations, {} of {} responses corrupted",
        report.injected.corrupted, report.injected.frames
    ))
}

fn protocol_separation(report: &ScenarioReport) -> Outcome {
    let mut counts = std::collections::BTreeMap::<(String, u8), u64>::new();
    for e in report
        .modbus_trace
        .iter()
        .filter(|e| e.direction == Direction::MasterToSlave)
    {
        let fc = e.bytes[1];
        ensure([0x03, 0x05, 0x0F].contains(&fc), || {
            format!("function {fc:#04x} on {}", e.link)
        })?;
        ensure(fc != 0x0F || e.link == "plc1", || {
            format!("FC15 toward {}", e.link)
        })?;
        ensure(fc != 0x05 || e.link == "plc2", || {
            format!("FC05 toward {}", e.link)
        })?;
        *counts.entry((e.link.clone(), fc)).or_default() += 1;
    }
    for (link, fc) in [
        ("plc1", 0x03),
        ("plc1", 0x0F),
        ("plc2", 0x03),
        ("plc2", 0x05),
    ] {
        ensure(counts.contains_key(&(link.to_string(), fc)), || {
            format!("no FC{fc:02} toward {link}")
        })?;
    }
    let summary: Vec<String> = counts
        .iter()
        .map(|((l, fc), n)| format!("{l}:fc{fc:02}={n}"))
        .collect();
    Ok(summary.join(" "))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let scenario = run_scenario(&ScenarioConfig {
        cycles: 100,
        ..ScenarioConfig::default()
    });
    let scenario_time = started.elapsed();

    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 codec oracle", codec_oracle()),
        ("2 slave silence", slave_silence()),
        ("3 mqtt conformance", mqtt_conformance()),
    ];
    match &scenario {
        Ok(report) => {
            results.push(("4 retain discipline", retain_discipline(report)));
            results.push(("5 publish on change", publish_on_change()));
            results.push(("6 end-to-end handshake", end_to_end(report, scenario_time)));
        }
        Err(e) => {
            results.push(("4 retain discipline", Err(e.to_string())));
            results.push(("5 publish on change", publish_on_change()));
            results.push(("6 end-to-end handshake", Err(e.to_string())));
        }
    }
    results.push(("7 fault tolerance", fault_tolerance()));
    results.push((
        "8 protocol separation",
        scenario
            .as_ref()
            .map_err(|e| e.to_string())
            .and_then(protocol_separation),
    ));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
