//! Little-endian binary encoding for checkpoints and replay-buffer exports.
//!
//! Every top-level blob starts with a four-byte magic and a `u32` format
//! version. Floats are stored as their IEEE-754 bit patterns, so a decode of
//! an encode is bit-exact.

use alloc::format;
use alloc::vec::Vec;

use crate::nn::{Activation, Adam, AdamConfig, Dense, Gradients, Mlp};
use crate::{Error, Result};

pub const MLP_MAGIC: [u8; 4] = *b"TNN1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn header(&mut self, magic: [u8; 4]) {
        self.buf.extend_from_slice(&magic);
        self.u32(FORMAT_VERSION);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn len_prefixed(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        vs.iter().for_each(|v| self.f64(*v));
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| Error::Decode(format!("truncated input at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn header(&mut self, magic: [u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(Error::Decode(format!("bad magic {got:?}, expected {magic:?}")));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Decode(format!("unsupported format version {version}")));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Decode("length overflows usize".into()))
    }

    pub fn len_prefixed(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(Error::Decode(format!("vector length {n} exceeds input")));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::Decode(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )))
        }
    }
}

pub(crate) fn write_mlp(w: &mut Writer, mlp: &Mlp) {
    w.u32(mlp.depth() as u32);
    for layer in mlp.layers() {
        w.u64(layer.inputs as u64);
        w.u64(layer.outputs as u64);
        w.u8(layer.activation.code());
        w.u8(u8::from(layer.frozen));
        w.len_prefixed(&layer.weights);
        w.len_prefixed(&layer.bias);
    }
}

pub(crate) fn read_mlp(r: &mut Reader<'_>) -> Result<Mlp> {
    let depth = r.u32()? as usize;
    let mut layers = Vec::with_capacity(depth.min(64));
    for _ in 0..depth {
        let inputs = r.usize()?;
        let outputs = r.usize()?;
        let code = r.u8()?;
        let activation = Activation::from_code(code)
            .ok_or_else(|| Error::Decode(format!("unknown activation code {code}")))?;
        let frozen = r.u8()? != 0;
        let weights = r.len_prefixed()?;
        let bias = r.len_prefixed()?;
        layers.push(Dense {
            inputs,
            outputs,
            weights,
            bias,
            activation,
            frozen,
        });
    }
    Mlp::from_layers(layers).map_err(|e| Error::Decode(format!("{e}")))
}

fn write_grads(w: &mut Writer, g: &Gradients) {
    w.u32(g.layers.len() as u32);
    for (gw, gb) in &g.layers {
        w.len_prefixed(gw);
        w.len_prefixed(gb);
    }
}

fn read_grads(r: &mut Reader<'_>) -> Result<Gradients> {
    let n = r.u32()? as usize;
    let layers = (0..n)
        .map(|_| Ok((r.len_prefixed()?, r.len_prefixed()?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Gradients { layers })
}

pub(crate) fn write_adam(w: &mut Writer, adam: &Adam) {
    w.f64(adam.config.beta1);
    w.f64(adam.config.beta2);
    w.f64(adam.config.eps);
    w.u64(adam.step);
    write_grads(w, &adam.first);
    write_grads(w, &adam.second);
}

pub(crate) fn read_adam(r: &mut Reader<'_>) -> Result<Adam> {
    let config = AdamConfig {
        beta1: r.f64()?,
        beta2: r.f64()?,
        eps: r.f64()?,
    };
    Ok(Adam {
        config,
        step: r.u64()?,
        first: read_grads(r)?,
        second: read_grads(r)?,
    })
}

impl Mlp {
    /// Versioned binary checkpoint of shapes, activations, freeze flags and
    /// row-major parameters.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.header(MLP_MAGIC);
        write_mlp(&mut w, self);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.header(MLP_MAGIC)?;
        let mlp = read_mlp(&mut r)?;
        r.expect_end()?;
        Ok(mlp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SimRng;
    use proptest::prelude::*;
    use rand::SeedableRng;

    proptest! {
        #[test]
        fn mlp_round_trip_is_bit_exact(seed in any::<u64>(), hidden in 1usize..20, frozen in any::<bool>()) {
            let mut rng = SimRng::seed_from_u64(seed);
            let mut mlp = Mlp::new(&[3, hidden, 2], Activation::Relu, Activation::Softmax, &mut rng);
            mlp.layers_mut()[0].frozen = frozen;
            let back = Mlp::from_bytes(&mlp.to_bytes()).unwrap();
            prop_assert_eq!(back.to_bytes(), mlp.to_bytes());
            for (a, b) in back.layers().iter().zip(mlp.layers()) {
                for (x, y) in a.weights.iter().zip(&b.weights) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(Mlp::from_bytes(b"nope").is_err());
        let mut rng = SimRng::seed_from_u64(0);
        let bytes = Mlp::new(&[2, 2], Activation::Relu, Activation::Identity, &mut rng).to_bytes();
        assert!(Mlp::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Mlp::from_bytes(&extra).is_err());
    }

    #[test]
    fn adam_round_trip() {
        let mut rng = SimRng::seed_from_u64(4);
        let mut mlp = Mlp::new(&[2, 3, 1], Activation::Relu, Activation::Identity, &mut rng);
        let mut adam = Adam::new(&mlp, AdamConfig::default());
        let mut g = Gradients::zeros_like(&mlp);
        g.layers[0].0[1] = 0.25;
        adam.step(&mut mlp, &g, 1e-3).unwrap();
        let mut w = Writer::new();
        write_adam(&mut w, &adam);
        let bytes = w.finish();
        let back = read_adam(&mut Reader::new(&bytes)).unwrap();
        assert_eq!(back, adam);
    }
}
