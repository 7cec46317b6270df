use super::{DramError, DramTimingConfig, BURST_BYTES};

/// Physical location of a burst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct DramCoord {
    pub channel: u8,
    pub rank: u8,
    pub bank: u8,
    pub row: u32,
    pub column: u16,
}

impl DramCoord {
    /// Index of the bank within its channel.
    pub fn bank_index(&self, banks_per_rank: u32) -> usize {
        self.rank as usize * banks_per_rank as usize + self.bank as usize
    }
}

/// Bit-field layout, low to high: byte offset | channel | column | bank | rank | row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressMap {
    offset_bits: u32,
    channel_bits: u32,
    column_bits: u32,
    bank_bits: u32,
    rank_bits: u32,
    row_bits: u32,
}

fn log2_exact(v: u64, what: &str) -> Result<u32, DramError> {
    if v == 0 || !v.is_power_of_two() {
        return Err(DramError::InvalidConfig(format!("{what} must be a power of two, got {v}")));
    }
    Ok(v.trailing_zeros())
}

impl AddressMap {
    pub fn new(t: &DramTimingConfig) -> Result<Self, DramError> {
        let offset_bits = log2_exact(BURST_BYTES, "burst size")?;
        let channel_bits = log2_exact(t.channels as u64, "channels")?;
        let column_bits = log2_exact(t.row_bytes as u64 / BURST_BYTES, "row_bytes / 64")?;
        let bank_bits = log2_exact(t.banks as u64, "banks")?;
        let rank_bits = log2_exact(t.ranks as u64, "ranks")?;
        let total = log2_exact(t.capacity_bytes, "capacity_bytes")?;
        let low = offset_bits + channel_bits + column_bits + bank_bits + rank_bits;
        if total <= low || total - low > 32 {
            return Err(DramError::InvalidConfig(format!(
                "capacity_bytes leaves {} row bits",
                total as i64 - low as i64
            )));
        }
        Ok(AddressMap {
            offset_bits,
            channel_bits,
            column_bits,
            bank_bits,
            rank_bits,
            row_bits: total - low,
        })
    }

    pub fn capacity(&self) -> u64 {
        1u64 << (self.offset_bits
            + self.channel_bits
            + self.column_bits
            + self.bank_bits
            + self.rank_bits
            + self.row_bits)
    }

    pub fn columns(&self) -> u16 {
        1 << self.column_bits
    }

    /// Span of addresses holding every column of one row in every channel.
    pub fn row_span_bytes(&self) -> u64 {
        1 << (self.offset_bits + self.channel_bits + self.column_bits)
    }

    pub fn channel_of(&self, addr: u64) -> u8 {
        field(addr, self.offset_bits, self.channel_bits) as u8
    }

    pub fn decode(&self, addr: u64) -> DramCoord {
        let mut shift = self.offset_bits;
        let channel = field(addr, shift, self.channel_bits) as u8;
        shift += self.channel_bits;
        let column = field(addr, shift, self.column_bits) as u16;
        shift += self.column_bits;
        let bank = field(addr, shift, self.bank_bits) as u8;
        shift += self.bank_bits;
        let rank = field(addr, shift, self.rank_bits) as u8;
        shift += self.rank_bits;
        let row = field(addr, shift, self.row_bits) as u32;
        DramCoord { channel, rank, bank, row, column }
    }

    /// Burst-aligned address of a coordinate.
    pub fn encode(&self, c: &DramCoord) -> u64 {
        let mut addr = 0u64;
        let mut shift = self.offset_bits;
        addr |= (c.channel as u64) << shift;
        shift += self.channel_bits;
        addr |= (c.column as u64) << shift;
        shift += self.column_bits;
        addr |= (c.bank as u64) << shift;
        shift += self.bank_bits;
        addr |= (c.rank as u64) << shift;
        shift += self.rank_bits;
        addr |= (c.row as u64) << shift;
        addr
    }

    /// True when both addresses fall in the same (channel, rank, bank, row).
    pub fn same_row(&self, a: u64, b: u64) -> bool {
        let (x, y) = (self.decode(a), self.decode(b));
        x.channel == y.channel && x.rank == y.rank && x.bank == y.bank && x.row == y.row
    }
}

fn field(addr: u64, shift: u32, bits: u32) -> u64 {
    if bits == 0 {
        0
    } else {
        (addr >> shift) & ((1u64 << bits) - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map() -> AddressMap {
        AddressMap::new(&DramTimingConfig::default()).unwrap()
    }

    #[test]
    fn default_layout() {
        let m = map();
        assert_eq!(m.capacity(), 2 << 30);
        assert_eq!(m.columns(), 32);
        assert_eq!(m.row_span_bytes(), 4096);
        // consecutive bursts alternate channels
        assert_eq!(m.channel_of(0), 0);
        assert_eq!(m.channel_of(64), 1);
        assert!(m.same_row(0, 128));
        assert!(!m.same_row(0, 64));
    }

    #[test]
    fn rejects_non_power_of_two() {
        let t = DramTimingConfig { banks: 6, ..Default::default() };
        assert!(AddressMap::new(&t).is_err());
    }

    proptest! {
        #[test]
        fn decode_encode_bijective(addr in 0u64..(2u64 << 30)) {
            let m = map();
            let aligned = addr & !63;
            prop_assert_eq!(m.encode(&m.decode(aligned)), aligned);
        }
    }
}
