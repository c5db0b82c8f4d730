//! MQTT 3.1.1 control packets: the subset a QoS 0 bridge needs.
//!
//! Every packet starts with a fixed header: one byte holding the packet type
//! (high nibble) and flags (low nibble), followed by the remaining length in
//! 1 to 4 base-128 digits.

use std::fmt;

use thiserror::Error;

pub const PROTOCOL_NAME: &str = "MQTT";
pub const PROTOCOL_LEVEL: u8 = 4;
pub const MAX_REMAINING_LENGTH: u32 = 268_435_455;
const MAX_STRING_LEN: usize = u16::MAX as usize;

const CONNECT: u8 = 1;
const CONNACK: u8 = 2;
const PUBLISH: u8 = 3;
const SUBSCRIBE: u8 = 8;
const SUBACK: u8 = 9;
const PINGREQ: u8 = 12;
const PINGRESP: u8 = 13;
const DISCONNECT: u8 = 14;

const RETAIN_FLAG: u8 = 0x01;
const QOS_MASK: u8 = 0x06;
const DUP_FLAG: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MqttDecodeError {
    /// Stream underrun: not a failure, wait for more bytes.
    #[error("incomplete packet")]
    NeedMoreBytes,
    #[error("malformed packet: {0}")]
    MalformedPacket(&'static str),
    #[error("unsupported packet: {0}")]
    UnsupportedPacket(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopicError {
    #[error("topic is empty")]
    Empty,
    #[error("topic contains NUL")]
    ContainsNul,
    #[error("topic name contains a wildcard")]
    Wildcard,
    #[error("topic is longer than 65535 bytes")]
    TooLong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("remaining length {0} exceeds 268435455")]
pub struct ValueTooLarge(pub u64);

fn check_topic(s: &str) -> Result<(), TopicError> {
    if s.is_empty() {
        return Err(TopicError::Empty);
    }
    if s.contains('\0') {
        return Err(TopicError::ContainsNul);
    }
    if s.len() > MAX_STRING_LEN {
        return Err(TopicError::TooLong);
    }
    Ok(())
}

/// A topic a message is published to. Never contains `+` or `#`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TopicName(String);

impl TopicName {
    pub fn new(name: impl Into<String>) -> Result<Self, TopicError> {
        let name = name.into();
        check_topic(&name)?;
        if name.contains(['+', '#']) {
            return Err(TopicError::Wildcard);
        }
        Ok(TopicName(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A subscription filter. Wildcards are representable here; the broker rejects them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TopicFilter(String);

impl TopicFilter {
    pub fn new(filter: impl Into<String>) -> Result<Self, TopicError> {
        let filter = filter.into();
        check_topic(&filter)?;
        Ok(TopicFilter(filter))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn has_wildcard(&self) -> bool {
        self.0.contains(['+', '#'])
    }
}

impl fmt::Display for TopicFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ConnectReturnCode {
    Accepted = 0,
    UnacceptableProtocolVersion = 1,
    IdentifierRejected = 2,
    ServerUnavailable = 3,
    BadUsernameOrPassword = 4,
    NotAuthorized = 5,
}

impl ConnectReturnCode {
    pub fn from_u8(code: u8) -> Option<Self> {
        use ConnectReturnCode::*;
        Some(match code {
            0 => Accepted,
            1 => UnacceptableProtocolVersion,
            2 => IdentifierRejected,
            3 => ServerUnavailable,
            4 => BadUsernameOrPassword,
            5 => NotAuthorized,
            _ => return None,
        })
    }

    pub fn value(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubackCode {
    Granted(u8),
    Failure,
}

impl SubackCode {
    fn value(self) -> u8 {
        match self {
            SubackCode::Granted(qos) => qos,
            SubackCode::Failure => 0x80,
        }
    }
}

/// A QoS 0 application message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publish {
    pub topic: TopicName,
    pub payload: Vec<u8>,
    pub retain: bool,
    pub dup: bool,
}

impl Publish {
    pub fn new(topic: TopicName, payload: impl Into<Vec<u8>>) -> Self {
        Publish {
            topic,
            payload: payload.into(),
            retain: false,
            dup: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MqttPacket {
    Connect {
        client_id: String,
        keepalive: u16,
        clean_session: bool,
    },
    Connack {
        return_code: ConnectReturnCode,
    },
    Publish(Publish),
    Subscribe {
        packet_id: u16,
        filters: Vec<(TopicFilter, u8)>,
    },
    Suback {
        packet_id: u16,
        granted: Vec<SubackCode>,
    },
    Pingreq,
    Pingresp,
    Disconnect,
}

impl MqttPacket {
    pub fn name(&self) -> &'static str {
        match self {
            MqttPacket::Connect { .. } => "CONNECT",
            MqttPacket::Connack { .. } => "CONNACK",
            MqttPacket::Publish(_) => "PUBLISH",
            MqttPacket::Subscribe { .. } => "SUBSCRIBE",
            MqttPacket::Suback { .. } => "SUBACK",
            MqttPacket::Pingreq => "PINGREQ",
            MqttPacket::Pingresp => "PINGRESP",
            MqttPacket::Disconnect => "DISCONNECT",
        }
    }
}

/// Little-endian base-128 with continuation bit 0x80.
pub fn encode_remaining_length(n: u32) -> Result<Vec<u8>, ValueTooLarge> {
    if n > MAX_REMAINING_LENGTH {
        return Err(ValueTooLarge(u64::from(n)));
    }
    let mut out = Vec::with_capacity(4);
    let mut rest = n;
    loop {
        let mut digit = (rest % 128) as u8;
        rest /= 128;
        if rest > 0 {
            digit |= 0x80;
        }
        out.push(digit);
        if rest == 0 {
            return Ok(out);
        }
    }
}

/// Decodes a remaining length; returns the value and the number of bytes used.
pub fn decode_remaining_length(bytes: &[u8]) -> Result<(u32, usize), MqttDecodeError> {
    let mut value: u32 = 0;
    for (i, byte) in bytes.iter().enumerate().take(4) {
        value |= u32::from(byte & 0x7F) << (7 * i);
        if byte & 0x80 == 0 {
            return Ok((value, i + 1));
        }
    }
    if bytes.len() >= 4 {
        Err(MqttDecodeError::MalformedPacket(
            "remaining length longer than 4 bytes",
        ))
    } else {
        Err(MqttDecodeError::NeedMoreBytes)
    }
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    assert!(
        s.len() <= MAX_STRING_LEN,
        "MQTT string longer than 65535 bytes"
    );
    out.extend_from_slice(&(s.len() as u16).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_packet(packet: &MqttPacket) -> Vec<u8> {
    let (first, body) = match packet {
        MqttPacket::Connect {
            client_id,
            keepalive,
            clean_session,
        } => {
            let mut body = Vec::with_capacity(12 + client_id.len());
            put_string(&mut body, PROTOCOL_NAME);
            body.push(PROTOCOL_LEVEL);
            body.push(if *clean_session { 0x02 } else { 0x00 });
            body.extend_from_slice(&keepalive.to_be_bytes());
            put_string(&mut body, client_id);
            (CONNECT << 4, body)
        }
        MqttPacket::Connack { return_code } => (CONNACK << 4, vec![0x00, return_code.value()]),
        MqttPacket::Publish(publish) => {
            let mut flags = 0;
            if publish.retain {
                flags |= RETAIN_FLAG;
            }
            if publish.dup {
                flags |= DUP_FLAG;
            }
            let mut body = Vec::with_capacity(2 + publish.topic.0.len() + publish.payload.len());
            put_string(&mut body, publish.topic.as_str());
            body.extend_from_slice(&publish.payload);
            (PUBLISH << 4 | flags, body)
        }
        MqttPacket::Subscribe { packet_id, filters } => {
            let mut body = packet_id.to_be_bytes().to_vec();
            for (filter, qos) in filters {
                put_string(&mut body, filter.as_str());
                body.push(*qos);
            }
            (SUBSCRIBE << 4 | 0x02, body)
        }
        MqttPacket::Suback { packet_id, granted } => {
            let mut body = packet_id.to_be_bytes().to_vec();
            body.extend(granted.iter().map(|g| g.value()));
            (SUBACK << 4, body)
        }
        MqttPacket::Pingreq => (PINGREQ << 4, Vec::new()),
        MqttPacket::Pingresp => (PINGRESP << 4, Vec::new()),
        MqttPacket::Disconnect => (DISCONNECT << 4, Vec::new()),
    };
    let length = encode_remaining_length(body.len() as u32).expect("packet body fits in 256 MiB");
    let mut out = Vec::with_capacity(1 + length.len() + body.len());
    out.push(first);
    out.extend_from_slice(&length);
    out.extend_from_slice(&body);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> Result<u8, MqttDecodeError> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or(MqttDecodeError::MalformedPacket("packet body too short"))?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16, MqttDecodeError> {
        Ok(u16::from_be_bytes([self.u8()?, self.u8()?]))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MqttDecodeError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(MqttDecodeError::MalformedPacket(
                "string runs past packet end",
            ));
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn string(&mut self) -> Result<String, MqttDecodeError> {
        let len = usize::from(self.u16()?);
        let raw = self.take(len)?;
        let s = std::str::from_utf8(raw)
            .map_err(|_| MqttDecodeError::MalformedPacket("string is not UTF-8"))?;
        if s.contains('\0') {
            return Err(MqttDecodeError::MalformedPacket("string contains NUL"));
        }
        Ok(s.to_string())
    }

    fn rest(&mut self) -> &'a [u8] {
        let rest = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        rest
    }

    fn is_empty(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn finish(&self) -> Result<(), MqttDecodeError> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(MqttDecodeError::MalformedPacket("trailing bytes in packet"))
        }
    }
}

fn expect_flags(flags: u8, expected: u8) -> Result<(), MqttDecodeError> {
    if flags != expected {
        return Err(MqttDecodeError::MalformedPacket(
            "invalid fixed header flags",
        ));
    }
    Ok(())
}

/// Decodes one packet from the front of `bytes`, returning it with the
/// number of bytes consumed.
pub fn decode_packet(bytes: &[u8]) -> Result<(MqttPacket, usize), MqttDecodeError> {
    let Some(&first) = bytes.first() else {
        return Err(MqttDecodeError::NeedMoreBytes);
    };
    let (length, length_len) = decode_remaining_length(&bytes[1..])?;
    let header_len = 1 + length_len;
    let total = header_len + length as usize;
    if bytes.len() < total {
        return Err(MqttDecodeError::NeedMoreBytes);
    }
    let packet_type = first >> 4;
    let flags = first & 0x0F;
    let mut r = Reader {
        bytes: &bytes[header_len..total],
        pos: 0,
    };
    let packet = match packet_type {
        CONNECT => {
            expect_flags(flags, 0)?;
            let name = r.string()?;
            if name != PROTOCOL_NAME {
                return Err(MqttDecodeError::UnsupportedPacket(
                    "protocol name is not MQTT",
                ));
            }
            if r.u8()? != PROTOCOL_LEVEL {
                return Err(MqttDecodeError::UnsupportedPacket(
                    "protocol level is not 4",
                ));
            }
            let connect_flags = r.u8()?;
            if connect_flags & 0x01 != 0 {
                return Err(MqttDecodeError::MalformedPacket(
                    "reserved connect flag set",
                ));
            }
            if connect_flags & 0xFC != 0 {
                return Err(MqttDecodeError::UnsupportedPacket(
                    "will, username and password are not supported",
                ));
            }
            let keepalive = r.u16()?;
            let client_id = r.string()?;
            r.finish()?;
            MqttPacket::Connect {
                client_id,
                keepalive,
                clean_session: connect_flags & 0x02 != 0,
            }
        }
        CONNACK => {
            expect_flags(flags, 0)?;
            let ack_flags = r.u8()?;
            if ack_flags & 0xFE != 0 {
                return Err(MqttDecodeError::MalformedPacket(
                    "reserved connack flags set",
                ));
            }
            let return_code = ConnectReturnCode::from_u8(r.u8()?).ok_or(
                MqttDecodeError::MalformedPacket("unknown connack return code"),
            )?;
            r.finish()?;
            MqttPacket::Connack { return_code }
        }
        PUBLISH => {
            match (flags & QOS_MASK) >> 1 {
                0 => {}
                3 => return Err(MqttDecodeError::MalformedPacket("QoS 3 is invalid")),
                _ => {
                    return Err(MqttDecodeError::UnsupportedPacket(
                        "only QoS 0 is supported",
                    ))
                }
            }
            let topic = TopicName::new(r.string()?)
                .map_err(|_| MqttDecodeError::MalformedPacket("invalid topic name"))?;
            let payload = r.rest().to_vec();
            MqttPacket::Publish(Publish {
                topic,
                payload,
                retain: flags & RETAIN_FLAG != 0,
                dup: flags & DUP_FLAG != 0,
            })
        }
        SUBSCRIBE => {
            expect_flags(flags, 0x02)?;
            let packet_id = r.u16()?;
            if packet_id == 0 {
                return Err(MqttDecodeError::MalformedPacket(
                    "packet identifier is zero",
                ));
            }
            let mut filters = Vec::new();
            while !r.is_empty() {
                let filter = TopicFilter::new(r.string()?)
                    .map_err(|_| MqttDecodeError::MalformedPacket("invalid topic filter"))?;
                let qos = r.u8()?;
                if qos > 2 {
                    return Err(MqttDecodeError::MalformedPacket("invalid requested QoS"));
                }
                filters.push((filter, qos));
            }
            if filters.is_empty() {
                return Err(MqttDecodeError::MalformedPacket(
                    "subscribe without filters",
                ));
            }
            MqttPacket::Subscribe { packet_id, filters }
        }
        SUBACK => {
            expect_flags(flags, 0)?;
            let packet_id = r.u16()?;
            let granted = r
                .rest()
                .iter()
                .map(|code| match code {
                    0..=2 => Ok(SubackCode::Granted(*code)),
                    0x80 => Ok(SubackCode::Failure),
                    _ => Err(MqttDecodeError::MalformedPacket(
                        "invalid suback return code",
                    )),
                })
                .collect::<Result<Vec<_>, _>>()?;
            MqttPacket::Suback { packet_id, granted }
        }
        PINGREQ | PINGRESP | DISCONNECT => {
            expect_flags(flags, 0)?;
            r.finish()?;
            match packet_type {
                PINGREQ => MqttPacket::Pingreq,
                PINGRESP => MqttPacket::Pingresp,
                _ => MqttPacket::Disconnect,
            }
        }
        0 | 15 => return Err(MqttDecodeError::MalformedPacket("reserved packet type")),
        _ => {
            return Err(MqttDecodeError::UnsupportedPacket(
                "packet type not implemented",
            ))
        }
    };
    Ok((packet, total))
}

impl fmt::Display for MqttPacket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MqttPacket::Connect {
                client_id,
                keepalive,
                clean_session,
            } => write!(
                f,
                "CONNECT client_id={client_id:?} keepalive={keepalive}s clean_session={clean_session}"
            ),
            MqttPacket::Connack { return_code } => {
                write!(f, "CONNACK return_code={} ({return_code:?})", return_code.value())
            }
            MqttPacket::Publish(p) => {
                write!(f, "PUBLISH topic={:?} retain={} dup={} qos=0 payload=", p.topic.as_str(), p.retain, p.dup)?;
                for b in &p.payload {
                    write!(f, "{b:02x}")?;
                }
                Ok(())
            }
            MqttPacket::Subscribe { packet_id, filters } => {
                write!(f, "SUBSCRIBE packet_id={packet_id}")?;
                for (filter, qos) in filters {
                    write!(f, " {:?}@{qos}", filter.as_str())?;
                }
                Ok(())
            }
            MqttPacket::Suback { packet_id, granted } => {
                write!(f, "SUBACK packet_id={packet_id} granted={granted:?}")
            }
            other => f.write_str(other.name()),
        }
    }
}
