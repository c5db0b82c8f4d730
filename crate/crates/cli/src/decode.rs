//! Pretty-printers behind `decode-modbus` and `decode-mqtt`.

use plclink::modbus::frame::verify_crc;
use plclink::modbus::{decode_adu, DecodeError, Direction, Role, TraceEntry};
use plclink::mqtt::codec::decode_packet;

/// One decoded item: the text to print and whether it was valid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub text: String,
    pub ok: bool,
}

pub fn parse_hex(input: &str) -> Result<Vec<u8>, String> {
    let cleaned: String = input
        .chars()
        .filter(|c| !c.is_whitespace() && *c != ':' && *c != '-')
        .collect();
    let cleaned = cleaned
        .strip_prefix("0x")
        .or_else(|| cleaned.strip_prefix("0X"))
        .unwrap_or(&cleaned);
    hex::decode(cleaned).map_err(|e| format!("invalid hex: {e}"))
}

/// Decodes a Modbus RTU ADU. Without a role, a request reading is tried
/// first and a response reading second.
pub fn modbus(bytes: &[u8], role: Option<Role>) -> Verdict {
    if let Err(err) = verify_crc(bytes) {
        let text = match err {
            DecodeError::CrcMismatch { computed, received } => format!(
                "slave {}, function {:#04x}, CRC MISMATCH (computed {:02x}{:02x}, received {:02x}{:02x})",
                bytes[0],
                bytes[1],
                computed as u8,
                (computed >> 8) as u8,
                received as u8,
                (received >> 8) as u8
            ),
            other => format!("INVALID: {other}"),
        };
        return Verdict { text, ok: false };
    }
    let roles = match role {
        Some(r) => vec![r],
        None => vec![Role::Slave, Role::Master],
    };
    let mut first_error = None;
    for r in roles {
        match decode_adu(bytes, r) {
            Ok(frame) => {
                return Verdict {
                    text: format!("{frame}, CRC OK"),
                    ok: true,
                }
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    Verdict {
        text: format!(
            "CRC OK, INVALID: {}",
            first_error.expect("at least one role tried")
        ),
        ok: false,
    }
}

/// Decodes every line of a Modbus trace file.
pub fn modbus_trace(text: &str) -> Vec<Verdict> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|line| match TraceEntry::parse(line) {
            Some(entry) => {
                let role = match entry.direction {
                    Direction::MasterToSlave => Role::Slave,
                    Direction::SlaveToMaster => Role::Master,
                };
                let v = modbus(&entry.bytes, Some(role));
                Verdict {
                    text: format!(
                        "{:.6} {} {} {}",
                        entry.at.as_secs_f64(),
                        entry.link,
                        entry.direction.as_str(),
                        v.text
                    ),
                    ok: v.ok,
                }
            }
            None => Verdict {
                text: format!("UNPARSEABLE LINE: {line}"),
                ok: false,
            },
        })
        .collect()
}

/// Decodes one or more MQTT control packets laid end to end.
pub fn mqtt(bytes: &[u8]) -> Vec<Verdict> {
    let mut out = Vec::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        match decode_packet(rest) {
            Ok((packet, used)) => {
                out.push(Verdict {
                    text: format!("{packet} ({used} bytes)"),
                    ok: true,
                });
                rest = &rest[used..];
            }
            Err(e) => {
                out.push(Verdict {
                    text: format!("INVALID: {e}"),
                    ok: false,
                });
                break;
            }
        }
    }
    if out.is_empty() {
        out.push(Verdict {
            text: "INVALID: no bytes".into(),
            ok: false,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn read_request_prints_crc_ok() {
        let v = modbus(&parse_hex("010300000001840a").unwrap(), None);
        assert_eq!(
            v.text,
            "slave 1, Read Holding Registers, start 0, qty 1, CRC OK"
        );
        assert!(v.ok);
    }

    #[test]
    fn flipped_crc_is_reported() {
        let v = modbus(&parse_hex("010300000001840b").unwrap(), None);
        assert!(v.text.contains("CRC MISMATCH"));
        assert!(!v.ok);
    }

    #[test]
    fn exception_decodes_as_response() {
        let v = modbus(&parse_hex("018302c0f1").unwrap(), None);
        assert!(v.ok);
        assert!(
            v.text.contains("Exception for Read Holding Registers"),
            "{}",
            v.text
        );
    }

    #[test]
    fn hex_accepts_separators() {
        assert_eq!(parse_hex("0x01 03:00").unwrap(), vec![1, 3, 0]);
        assert!(parse_hex("0g").is_err());
    }

    #[test]
    fn mqtt_ping_and_garbage() {
        let v = mqtt(&[0xC0, 0x00, 0xE0, 0x00]);
        assert_eq!(v.len(), 2);
        assert!(v[0].text.starts_with("PINGREQ"));
        assert!(v[1].text.starts_with("DISCONNECT"));
        let bad = mqtt(&[0x30]);
        assert!(!bad[0].ok);
    }
}
