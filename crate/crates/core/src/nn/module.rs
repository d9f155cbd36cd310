//! Parameter containers.
//!
//! A model's gradient is stored in another instance of the same model type
//! (see [`zeros_like`]); optimizers and checkpoints walk both in the same
//! visiting order.

use sha2::{Digest, Sha256};

pub trait Module: Clone {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a [f32]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f32]));
}

/// Forwards a child's parameters with `prefix.` prepended to their names.
pub fn visit_child<'a, M: Module>(prefix: &str, child: &'a M, f: &mut dyn FnMut(&str, &'a [f32])) {
    child.visit(&mut |name, p| f(&format!("{prefix}.{name}"), p));
}

pub fn visit_child_mut<M: Module>(prefix: &str, child: &mut M, f: &mut dyn FnMut(&str, &mut [f32])) {
    child.visit_mut(&mut |name, p| f(&format!("{prefix}.{name}"), p));
}

pub fn zeros_like<M: Module>(m: &M) -> M {
    let mut g = m.clone();
    g.visit_mut(&mut |_, p| p.fill(0.0));
    g
}

pub fn slices<M: Module>(m: &M) -> Vec<&[f32]> {
    let mut out = Vec::new();
    m.visit(&mut |_, p| out.push(p));
    out
}

pub fn named_slices<M: Module>(m: &M) -> Vec<(String, &[f32])> {
    let mut out = Vec::new();
    m.visit(&mut |n, p| out.push((n.to_string(), p)));
    out
}

/// `acc += other`, parameter by parameter.
pub fn add_into<M: Module>(acc: &mut M, other: &M) {
    let src = slices(other);
    let mut i = 0;
    acc.visit_mut(&mut |_, p| {
        for (a, b) in p.iter_mut().zip(src[i]) {
            *a += b;
        }
        i += 1;
    });
}

pub fn scale<M: Module>(m: &mut M, s: f32) {
    m.visit_mut(&mut |_, p| {
        for v in p.iter_mut() {
            *v *= s;
        }
    });
}

pub fn param_count<M: Module>(m: &M) -> usize {
    slices(m).iter().map(|p| p.len()).sum()
}

pub fn all_finite<M: Module>(m: &M) -> bool {
    slices(m).iter().all(|p| p.iter().all(|v| v.is_finite()))
}

/// Hex SHA-256 over parameter names and their little-endian bit patterns.
pub fn content_hash<M: Module>(m: &M) -> String {
    let mut h = Sha256::new();
    m.visit(&mut |name, p| {
        h.update(name.as_bytes());
        h.update((p.len() as u64).to_le_bytes());
        for v in p {
            h.update(v.to_bits().to_le_bytes());
        }
    });
    hex::encode(h.finalize())
}
