use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::volume::{Slice, SliceStack};

pub const MIN_RESCALE: f32 = 0.8;
pub const MAX_RESCALE: f32 = 1.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AugmentOp {
    /// Mirror columns.
    FlipH,
    /// Mirror rows.
    FlipV,
    /// Zoom about the slice centre by the factor, keeping the slice shape.
    Rescale(f32),
}

impl AugmentOp {
    fn check(self) -> Result<()> {
        match self {
            AugmentOp::Rescale(f) if !(MIN_RESCALE..=MAX_RESCALE).contains(&f) => Err(Error::InvalidParameter(
                format!("rescale factor {f} outside [{MIN_RESCALE}, {MAX_RESCALE}]"),
            )),
            _ => Ok(()),
        }
    }
}

fn flip_h(s: &mut Slice) {
    let w = s.width;
    for row in s.data.chunks_mut(w) {
        row.reverse();
    }
}

fn flip_v(s: &mut Slice) {
    let (h, w) = (s.height, s.width);
    for c in 0..s.channels {
        let ch = s.channel_mut(c);
        for r in 0..h / 2 {
            let (top, bottom) = ch.split_at_mut((h - 1 - r) * w);
            top[r * w..(r + 1) * w].swap_with_slice(&mut bottom[..w]);
        }
    }
}

/// Bilinear zoom about the centre; samples outside the slice clamp to the edge.
fn rescale(s: &mut Slice, f: f32) {
    if f == 1.0 {
        return;
    }
    let (h, w) = (s.height, s.width);
    let (cy, cx) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
    let src = s.data.clone();
    let n = h * w;
    for r in 0..h {
        let y = (cy + (r as f32 - cy) / f).clamp(0.0, (h - 1) as f32);
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = y - y0 as f32;
        for c in 0..w {
            let x = (cx + (c as f32 - cx) / f).clamp(0.0, (w - 1) as f32);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = x - x0 as f32;
            for ch in 0..s.channels {
                let p = &src[ch * n..(ch + 1) * n];
                let top = p[y0 * w + x0] * (1.0 - tx) + p[y0 * w + x1] * tx;
                let bot = p[y1 * w + x0] * (1.0 - tx) + p[y1 * w + x1] * tx;
                s.data[ch * n + r * w + c] = top * (1.0 - ty) + bot * ty;
            }
        }
    }
}

fn apply(s: &mut Slice, op: AugmentOp) {
    match op {
        AugmentOp::FlipH => flip_h(s),
        AugmentOp::FlipV => flip_v(s),
        AugmentOp::Rescale(f) => rescale(s, f),
    }
}

/// Applies each op to each slice with probability 1/2.
///
/// The draws depend only on `seed`, the slice position and the op position,
/// and an op hits the input and target of a slice alike. Calling twice with
/// the same seed and only flips restores the stack.
pub fn augment(stack: &SliceStack, ops: &[AugmentOp], seed: u64) -> Result<SliceStack> {
    for op in ops {
        op.check()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = stack.clone();
    for i in 0..out.inputs.len() {
        for &op in ops {
            if rng.random_bool(0.5) {
                apply(&mut out.inputs[i], op);
                if let Some(t) = out.targets.as_mut() {
                    apply(&mut t[i], op);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Axis;

    fn stack() -> SliceStack {
        let mk = |ch: usize, k: f32| Slice::new(ch, 5, 6, (0..ch * 30).map(|i| (i as f32 * k).sin()).collect()).unwrap();
        SliceStack {
            axis: Axis::Z,
            index_range: 0..8,
            inputs: (0..8).map(|i| mk(4, 0.1 + i as f32)).collect(),
            targets: Some((0..8).map(|i| mk(3, 0.7 + i as f32)).collect()),
        }
    }

    #[test]
    fn flips_are_involutions() {
        let s = stack();
        for op in [AugmentOp::FlipH, AugmentOp::FlipV] {
            let mut one = s.inputs[0].clone();
            apply(&mut one, op);
            assert_ne!(one, s.inputs[0]);
            apply(&mut one, op);
            assert_eq!(one, s.inputs[0]);
        }
        let ops = [AugmentOp::FlipH, AugmentOp::FlipV];
        let twice = augment(&augment(&s, &ops, 9).unwrap(), &ops, 9).unwrap();
        assert_eq!(twice, s);
    }

    #[test]
    fn unit_rescale_is_identity() {
        let s = stack();
        let mut one = s.inputs[3].clone();
        rescale(&mut one, 1.0);
        assert_eq!(one, s.inputs[3]);
        assert_eq!(augment(&s, &[AugmentOp::Rescale(1.0)], 3).unwrap(), s);
    }

    #[test]
    fn factor_range_is_checked() {
        assert!(augment(&stack(), &[AugmentOp::Rescale(1.3)], 0).is_err());
        assert!(augment(&stack(), &[AugmentOp::Rescale(0.79)], 0).is_err());
    }

    #[test]
    fn flip_v_moves_rows() {
        let mut s = Slice::new(1, 3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        flip_v(&mut s);
        assert_eq!(s.data, vec![5.0, 6.0, 3.0, 4.0, 1.0, 2.0]);
        flip_h(&mut s);
        assert_eq!(s.data, vec![6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
    }
}
