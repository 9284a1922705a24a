use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::DeviceConfig;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum MapError {
    #[error("address {address:#x} is not aligned to the {burst_bytes}-byte burst")]
    Misaligned { address: u64, burst_bytes: u64 },
    #[error("address {address:#x} is beyond the {capacity:#x}-byte channel")]
    OutOfRange { address: u64, capacity: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MappedAddress {
    pub row: u32,
    /// Column of the first beat of the burst.
    pub column: u32,
    /// Bank within its group.
    pub bank: u32,
    pub bank_group: u32,
}

/// Row-column-bank(-bank group) mapping, read MSB to LSB.
///
/// ```text
/// | row | column / BL | bank | bank group | burst offset |
/// ```
///
/// Consecutive bursts therefore rotate through the bank groups first, then
/// the banks, and only then move along the row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressMapper {
    burst_bytes: u64,
    capacity: u64,
    burst_length: u32,
    group_bits: u32,
    bank_bits: u32,
    column_bits: u32,
    row_bits: u32,
}

fn bits(n: u32) -> u32 {
    debug_assert!(n.is_power_of_two());
    n.trailing_zeros()
}

impl AddressMapper {
    pub fn new(config: &DeviceConfig) -> Self {
        AddressMapper {
            burst_bytes: config.burst_bytes(),
            capacity: config.capacity_bytes(),
            burst_length: config.burst_length,
            group_bits: bits(config.bank_groups()),
            bank_bits: bits(config.bank_mode.banks_per_group()),
            column_bits: bits(config.bursts_per_row()),
            row_bits: bits(config.rows_per_bank),
        }
    }

    pub fn burst_bytes(&self) -> u64 {
        self.burst_bytes
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn map(&self, address: u64) -> Result<MappedAddress, MapError> {
        if !address.is_multiple_of(self.burst_bytes) {
            return Err(MapError::Misaligned {
                address,
                burst_bytes: self.burst_bytes,
            });
        }
        if address >= self.capacity {
            return Err(MapError::OutOfRange {
                address,
                capacity: self.capacity,
            });
        }
        let mut rest = address / self.burst_bytes;
        let mut take = |n: u32| {
            let v = rest & ((1u64 << n) - 1);
            rest >>= n;
            v as u32
        };
        let bank_group = take(self.group_bits);
        let bank = take(self.bank_bits);
        let burst_in_row = take(self.column_bits);
        let row = take(self.row_bits);
        Ok(MappedAddress {
            row,
            column: burst_in_row * self.burst_length,
            bank,
            bank_group,
        })
    }

    /// Inverse of [`map`](Self::map).
    pub fn unmap(&self, m: &MappedAddress) -> u64 {
        let mut v = u64::from(m.row);
        v = (v << self.column_bits) | u64::from(m.column / self.burst_length);
        v = (v << self.bank_bits) | u64::from(m.bank);
        v = (v << self.group_bits) | u64::from(m.bank_group);
        v * self.burst_bytes
    }
}
