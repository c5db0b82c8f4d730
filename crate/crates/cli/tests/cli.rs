use std::io::Write;
use std::process::{Command, Output};

fn plclink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plclink"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn valid_modbus_frame_decodes_with_crc_ok() {
    let out = plclink(&["decode-modbus", "01 03 00 00 00 01 84 0A"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        stdout(&out).trim(),
        "slave 1, Read Holding Registers, start 0, qty 1, CRC OK"
    );
}

#[test]
fn flipped_crc_byte_is_reported_and_fails() {
    let out = plclink(&["decode-modbus", "010300000001840B"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("CRC MISMATCH"), "{text}");
    assert!(text.contains("computed 840a, received 840b"), "{text}");
}

#[test]
fn response_role_decodes_register_values() {
    let out = plclink(&["decode-modbus", "--role", "response", "01030200010000"]);
    // wrong CRC on purpose: only the verdict matters here
    assert_eq!(out.status.code(), Some(1));
    let body = [0x01u8, 0x03, 0x02, 0x00, 0x01];
    let crc = plclink::modbus::crc16(&body).to_le_bytes();
    let hex: String = body
        .iter()
        .chain(crc.iter())
        .map(|b| format!("{b:02x}"))
        .collect();
    let out = plclink(&["decode-modbus", "--role", "response", &hex]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("CRC OK"));
}

#[test]
fn mqtt_packets_decode_back_to_back() {
    let out = plclink(&["decode-mqtt", "300e000a706c63312f666c6167730001c000"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("PUBLISH topic=\"plc1/flags\" retain=false"));
    assert!(lines[0].contains("payload=0001"));
    assert!(lines[1].starts_with("PINGREQ"));
}

#[test]
fn truncated_mqtt_packet_fails() {
    let out = plclink(&["decode-mqtt", "3101"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("INVALID"));
}

#[test]
fn bad_hex_is_an_error() {
    let out = plclink(&["decode-modbus", "zz"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn trace_file_is_decoded_line_by_line() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "0.000000 plc1 M->S 010300000001840a").unwrap();
    writeln!(file, "0.010000 plc1 S->M 010302000079840").unwrap();
    writeln!(file, "0.020000 plc2 M->S 0105000000fffff0").unwrap();
    file.flush().unwrap();
    let out = plclink(&["decode-modbus", "--trace", file.path().to_str().unwrap()]);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 3, "{text}");
    assert!(text.lines().next().unwrap().contains("CRC OK"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn deterministic_single_cycle_passes() {
    let out = plclink(&["scenario", "--cycles", "1", "--deterministic"]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("cycles_completed 1 of 1"));
    assert!(text.contains("violations 0"));
    assert!(text.trim_end().ends_with("result PASS"));
}

#[test]
fn shipped_scenario_config_runs() {
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/scenario.toml");
    let out = plclink(&[
        "scenario",
        "--config",
        config,
        "--cycles",
        "2",
        "--deterministic",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}

#[test]
fn scenario_without_broker_deadlocks() {
    let base = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/scenario.toml"
    ))
    .unwrap();
    let text = base
        .replacen("enabled = true", "enabled = false", 1)
        .replacen("quiescence_ms = 30000", "quiescence_ms = 2000", 1);
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(text.as_bytes()).unwrap();
    file.flush().unwrap();
    let out = plclink(&[
        "scenario",
        "--config",
        file.path().to_str().unwrap(),
        "--cycles",
        "1",
        "--deterministic",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("cycles_completed 0 of 1"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("deadlock"));
}

#[test]
fn malformed_gateway_config_is_rejected() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "[modbus]\nslave_address = 300").unwrap();
    file.flush().unwrap();
    let out = plclink(&["gateway", "--config", file.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn disabled_gateway_exits_cleanly() {
    let base = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/gateway1.toml"
    ))
    .unwrap();
    let text = base.replacen("enabled = true", "enabled = false", 1);
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(text.as_bytes()).unwrap();
    file.flush().unwrap();
    let out = plclink(&["gateway", "--config", file.path().to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(plclink(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        plclink(&["plc", "--id", "3", "--listen", "127.0.0.1:0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(plclink(&[]).status.code(), Some(2));
}
