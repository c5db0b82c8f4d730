//! CRC-16/MODBUS: init 0xFFFF, reflected polynomial 0xA001, no final XOR.
//!
//! The checksum is transmitted low byte first.

const POLY: u16 = 0xA001;

static TABLE: [u16; 256] = build_table();

const fn build_table() -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u16;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ POLY
            } else {
                crc >> 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

/// Table-driven CRC-16/MODBUS over `data`.
pub fn crc16(data: &[u8]) -> u16 {
    data.iter().fold(0xFFFF, |crc, &byte| {
        (crc >> 8) ^ TABLE[((crc ^ u16::from(byte)) & 0xFF) as usize]
    })
}

/// Wire form of the checksum of `data`: `[lo, hi]`.
pub fn crc16_wire(data: &[u8]) -> [u8; 2] {
    crc16(data).to_le_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent reference: one shift per bit, no table.
    fn crc16_bitwise(data: &[u8]) -> u16 {
        let mut crc: u16 = 0xFFFF;
        for &byte in data {
            crc ^= u16::from(byte);
            for _ in 0..8 {
                let lsb = crc & 1;
                crc >>= 1;
                if lsb == 1 {
                    crc ^= 0xA001;
                }
            }
        }
        crc
    }

    #[test]
    fn empty_input_is_init_value() {
        assert_eq!(crc16(&[]), 0xFFFF);
    }

    #[test]
    fn read_holding_request_checksum() {
        let body = [0x01, 0x03, 0x00, 0x00, 0x00, 0x01];
        assert_eq!(crc16(&body), crc16_bitwise(&body));
        assert_eq!(crc16_wire(&body), [0x84, 0x0A]);
    }

    #[test]
    fn every_single_byte_matches_bitwise() {
        for x in 0..=255u8 {
            assert_eq!(crc16(&[x]), crc16_bitwise(&[x]), "byte {x:#04x}");
        }
    }

    proptest! {
        #[test]
        fn table_matches_bitwise(data in proptest::collection::vec(any::<u8>(), 0..=256)) {
            prop_assert_eq!(crc16(&data), crc16_bitwise(&data));
        }
    }
}
