use core::hash::{Hash, Hasher};

use super::printer::rename_loop_vars;
use super::TensorProgram;

/// 64-bit FNV-1a; stable across runs, unlike the std default hasher.
#[derive(Clone, Copy, Debug)]
pub struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }
}

impl Hasher for Fnv64 {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn write_usize(&mut self, i: usize) {
        self.write(&(i as u64).to_le_bytes());
    }
}

fn canonical(p: &TensorProgram) -> TensorProgram {
    rename_loop_vars(p, |i| alloc::format!("%{i}"))
}

/// Hash invariant under loop-variable renaming.
pub fn structural_hash(p: &TensorProgram) -> u64 {
    let mut h = Fnv64::default();
    canonical(p).hash(&mut h);
    h.finish()
}

/// Equality up to loop-variable renaming.
pub fn structural_equal(a: &TensorProgram, b: &TensorProgram) -> bool {
    a.buffers == b.buffers && canonical(a) == canonical(b)
}
