//! Canonical packed state encoding: each agent's location index and each
//! variable (stored as an offset from its lower bound) occupies a fixed bit
//! field inside an array of 64-bit words. Equal states encode to equal
//! words, so the words double as the hash key.

#[derive(Debug, Clone, Copy)]
struct Field {
    offset: u32,
    width: u32,
}

#[derive(Debug, Clone)]
pub struct StateLayout {
    agent_fields: Vec<Field>,
    var_fields: Vec<Field>,
    var_lo: Vec<i64>,
    pub words: usize,
}

fn width_for(values: u64) -> u32 {
    if values <= 1 {
        0
    } else {
        64 - (values - 1).leading_zeros()
    }
}

impl StateLayout {
    pub fn new(agent_location_counts: &[u32], var_ranges: &[(i64, i64)]) -> StateLayout {
        let mut offset = 0u32;
        let mut take = |values: u64| {
            let width = width_for(values);
            let field = Field { offset, width };
            offset += width;
            field
        };
        let agent_fields = agent_location_counts
            .iter()
            .map(|&n| take(n as u64))
            .collect();
        let var_fields = var_ranges
            .iter()
            .map(|&(lo, hi)| take((hi - lo + 1) as u64))
            .collect();
        StateLayout {
            agent_fields,
            var_fields,
            var_lo: var_ranges.iter().map(|&(lo, _)| lo).collect(),
            words: (offset as usize).div_ceil(64).max(1),
        }
    }

    fn get(words: &[u64], field: Field) -> u64 {
        if field.width == 0 {
            return 0;
        }
        let word = (field.offset / 64) as usize;
        let bit = field.offset % 64;
        let mask = if field.width == 64 {
            u64::MAX
        } else {
            (1u64 << field.width) - 1
        };
        if bit + field.width <= 64 {
            (words[word] >> bit) & mask
        } else {
            let low = words[word] >> bit;
            let high = words[word + 1] << (64 - bit);
            (low | high) & mask
        }
    }

    fn set(words: &mut [u64], field: Field, value: u64) {
        if field.width == 0 {
            return;
        }
        let word = (field.offset / 64) as usize;
        let bit = field.offset % 64;
        let mask = if field.width == 64 {
            u64::MAX
        } else {
            (1u64 << field.width) - 1
        };
        debug_assert!(value <= mask);
        if bit + field.width <= 64 {
            words[word] = (words[word] & !(mask << bit)) | (value << bit);
        } else {
            let low_bits = 64 - bit;
            words[word] = (words[word] & !(mask << bit)) | (value << bit);
            let high_mask = mask >> low_bits;
            words[word + 1] = (words[word + 1] & !high_mask) | (value >> low_bits);
        }
    }

    pub fn pack(&self, locations: &[u32], vars: &[i64], out: &mut [u64]) {
        debug_assert_eq!(locations.len(), self.agent_fields.len());
        debug_assert_eq!(vars.len(), self.var_fields.len());
        out.fill(0);
        for (field, &loc) in self.agent_fields.iter().zip(locations) {
            Self::set(out, *field, loc as u64);
        }
        for ((field, &value), &lo) in self.var_fields.iter().zip(vars).zip(&self.var_lo) {
            Self::set(out, *field, (value - lo) as u64);
        }
    }

    pub fn unpack(&self, words: &[u64], locations: &mut [u32], vars: &mut [i64]) {
        for (i, field) in self.agent_fields.iter().enumerate() {
            locations[i] = Self::get(words, *field) as u32;
        }
        for (i, field) in self.var_fields.iter().enumerate() {
            vars[i] = Self::get(words, *field) as i64 + self.var_lo[i];
        }
    }
}
