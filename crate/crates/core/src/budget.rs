use crate::error::{LabError, Result};

/// Largest bit-length accepted unless configured otherwise.
pub const DEFAULT_MAX_LAMBDA: u32 = 28;
/// Default memory ceiling, 4 GiB.
pub const DEFAULT_MAX_BYTES: u128 = 4 << 30;
/// Environment variable mirroring `--max-mem-gib`.
pub const MAX_MEM_ENV: &str = "WSL_MAX_MEM_GIB";

/// Admission control for table-sized allocations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryBudget {
    pub max_lambda: u32,
    pub max_bytes: u128,
}

impl Default for MemoryBudget {
    fn default() -> Self {
        Self {
            max_lambda: DEFAULT_MAX_LAMBDA,
            max_bytes: DEFAULT_MAX_BYTES,
        }
    }
}

impl MemoryBudget {
    pub fn with_gib(gib: f64) -> Self {
        Self {
            max_bytes: (gib.max(0.0) * (1u64 << 30) as f64) as u128,
            ..Self::default()
        }
    }

    /// Reads `WSL_MAX_MEM_GIB`, falling back to the default when unset or unparsable.
    pub fn from_env() -> Self {
        std::env::var(MAX_MEM_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<f64>().ok())
            .map(Self::with_gib)
            .unwrap_or_default()
    }

    /// Bytes needed for `2^lambda` entries of `bytes_per_entry` each.
    pub fn table_bytes(lambda: u32, bytes_per_entry: u128) -> u128 {
        if lambda >= 120 {
            return u128::MAX;
        }
        (1u128 << lambda).saturating_mul(bytes_per_entry)
    }

    /// Admits a `2^lambda`-entry workload costing `bytes_per_entry` per entry.
    pub fn admit(&self, what: &str, lambda: u32, bytes_per_entry: u128) -> Result<()> {
        let required = Self::table_bytes(lambda, bytes_per_entry);
        if lambda > self.max_lambda || required > self.max_bytes {
            let limit = if lambda > self.max_lambda {
                Self::table_bytes(self.max_lambda, bytes_per_entry).min(self.max_bytes)
            } else {
                self.max_bytes
            };
            return Err(LabError::Resource {
                what: format!("{what} at lambda={lambda}"),
                required_bytes: required,
                limit_bytes: limit,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_over_cap_names_bytes() {
        let err = MemoryBudget::default().admit("sieve", 99, 1).unwrap_err();
        assert!(err.is_resource());
        let msg = err.to_string();
        assert!(msg.contains(&(1u128 << 99).to_string()), "{msg}");
    }

    #[test]
    fn small_budget_rejects_large_table() {
        let b = MemoryBudget::with_gib(0.001);
        assert!(b.admit("t", 10, 8).is_ok());
        assert!(b.admit("t", 24, 8).is_err());
    }
}
