//! The "QFG1" quantized model binary format.
//!
//! Layout (little-endian throughout):
//! - magic `QFG1` (4 bytes), version u8
//! - strategy id u8, height u8, width u8, num_classes u8
//! - filters: 3 x u16
//! - input channels u8, then per channel: mean f64, std f64
//! - input quantization: scale f64, zero point i8
//! - per conv layer (3): groups u8, cout u16, cin_per_group u16,
//!   weight scales cout x f64, int8 weights row-major (9 * cpg * cout),
//!   biases cout x i32, output quantization: scale f64, zero point i8
//! - dense: in_dim u16, out_dim u16, weight scales out x f64,
//!   int8 weights row-major (in * out), biases out x i32
//!
//! Requantization multipliers are not stored; they are recomputed from the
//! scales on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::ChannelStats;
use crate::error::{Error, Result};
use crate::model::FusionStrategy;

use super::{quantize_multiplier, QuantParams, QuantizedConvLayer, QuantizedDense, QuantizedModel};

const MAGIC: [u8; 4] = *b"QFG1";
const VERSION: u8 = 1;

fn strategy_id(s: FusionStrategy) -> u8 {
    FusionStrategy::ALL.iter().position(|&x| x == s).unwrap() as u8
}

fn strategy_from_id(id: u8) -> Result<FusionStrategy> {
    FusionStrategy::ALL
        .get(id as usize)
        .copied()
        .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy id {id}")))
}

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        Ok(self.inner.write_all(&[v])?)
    }
    fn i8(&mut self, v: i8) -> Result<()> {
        Ok(self.inner.write_all(&[v as u8])?)
    }
    fn u16(&mut self, v: u16) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }
    fn i32(&mut self, v: i32) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }
    fn qparams(&mut self, q: &QuantParams) -> Result<()> {
        self.f64(q.scale)?;
        self.i8(q.zero_point as i8)
    }
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, buf: &mut [u8], what: &'static str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Truncated(what)
            } else {
                Error::Io(e)
            }
        })
    }
    fn u8(&mut self, what: &'static str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.bytes(&mut b, what)?;
        Ok(b[0])
    }
    fn i8(&mut self, what: &'static str) -> Result<i8> {
        Ok(self.u8(what)? as i8)
    }
    fn u16(&mut self, what: &'static str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.bytes(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }
    fn i32(&mut self, what: &'static str) -> Result<i32> {
        let mut b = [0u8; 4];
        self.bytes(&mut b, what)?;
        Ok(i32::from_le_bytes(b))
    }
    fn f64(&mut self, what: &'static str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.bytes(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }
    fn qparams(&mut self, what: &'static str) -> Result<QuantParams> {
        let scale = self.f64(what)?;
        let zero_point = self.i8(what)? as i32;
        if !(scale > 0.0) {
            return Err(Error::InvalidConfig(format!("non-positive scale in {what}")));
        }
        Ok(QuantParams { scale, zero_point })
    }
}

/// Writes a quantized model file.
pub fn save_quantized(model: &QuantizedModel, path: &Path) -> Result<()> {
    let mut w = Writer { inner: BufWriter::new(File::create(path)?) };
    w.inner.write_all(&MAGIC)?;
    w.u8(VERSION)?;
    w.u8(strategy_id(model.strategy))?;
    w.u8(model.height as u8)?;
    w.u8(model.width as u8)?;
    w.u8(model.num_classes as u8)?;
    for f in model.filters {
        w.u16(f as u16)?;
    }
    let cin = model.norm_stats.channels();
    w.u8(cin as u8)?;
    for c in 0..cin {
        w.f64(model.norm_stats.mean[c])?;
        w.f64(model.norm_stats.std[c])?;
    }
    w.qparams(&model.input)?;
    for layer in &model.conv_layers {
        w.u8(layer.groups as u8)?;
        w.u16(layer.cout as u16)?;
        w.u16(layer.cin_per_group as u16)?;
        for &s in &layer.weight_scales {
            w.f64(s)?;
        }
        let raw: Vec<u8> = layer.weights.iter().map(|&v| v as u8).collect();
        w.inner.write_all(&raw)?;
        for &b in &layer.biases {
            w.i32(b)?;
        }
        w.qparams(&layer.output)?;
    }
    w.u16(model.dense.in_dim as u16)?;
    w.u16(model.dense.out_dim as u16)?;
    for &s in &model.dense.weight_scales {
        w.f64(s)?;
    }
    let raw: Vec<u8> = model.dense.weights.iter().map(|&v| v as u8).collect();
    w.inner.write_all(&raw)?;
    for &b in &model.dense.biases {
        w.i32(b)?;
    }
    w.inner.flush()?;
    Ok(())
}

/// Reads a quantized model file, recomputing the requantization multipliers.
pub fn load_quantized(path: &Path) -> Result<QuantizedModel> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?) };
    let mut magic = [0u8; 4];
    r.bytes(&mut magic, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic { expected: MAGIC, found: magic });
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let strategy = strategy_from_id(r.u8("strategy")?)?;
    let height = r.u8("height")? as usize;
    let width = r.u8("width")? as usize;
    let num_classes = r.u8("classes")? as usize;
    let mut filters = [0usize; 3];
    for f in &mut filters {
        *f = r.u16("filters")? as usize;
    }
    let cin = r.u8("input channels")? as usize;
    if cin != strategy.input_channels() {
        return Err(Error::shape_of(&[strategy.input_channels()], &[cin]));
    }
    let mut norm_stats = ChannelStats { mean: Vec::with_capacity(cin), std: Vec::with_capacity(cin) };
    for _ in 0..cin {
        norm_stats.mean.push(r.f64("norm mean")?);
        norm_stats.std.push(r.f64("norm std")?);
    }
    let input = r.qparams("input quant")?;

    let mut conv_layers = Vec::with_capacity(3);
    let mut in_scale = input.scale;
    for _ in 0..3 {
        let groups = r.u8("groups")? as usize;
        let cout = r.u16("cout")? as usize;
        let cin_per_group = r.u16("cin per group")? as usize;
        let mut weight_scales = Vec::with_capacity(cout);
        for _ in 0..cout {
            weight_scales.push(r.f64("weight scale")?);
        }
        let mut raw = vec![0u8; 9 * cin_per_group * cout];
        r.bytes(&mut raw, "conv weights")?;
        let weights: Vec<i8> = raw.iter().map(|&b| b as i8).collect();
        let mut biases = Vec::with_capacity(cout);
        for _ in 0..cout {
            biases.push(r.i32("conv bias")?);
        }
        let output = r.qparams("activation quant")?;
        let multipliers = weight_scales
            .iter()
            .map(|&ws| quantize_multiplier(in_scale * ws / output.scale))
            .collect();
        in_scale = output.scale;
        conv_layers.push(QuantizedConvLayer {
            groups,
            cin_per_group,
            cout,
            weights,
            weight_scales,
            biases,
            output,
            multipliers,
        });
    }

    let in_dim = r.u16("dense in")? as usize;
    let out_dim = r.u16("dense out")? as usize;
    let mut weight_scales = Vec::with_capacity(out_dim);
    for _ in 0..out_dim {
        weight_scales.push(r.f64("dense scale")?);
    }
    let mut raw = vec![0u8; in_dim * out_dim];
    r.bytes(&mut raw, "dense weights")?;
    let weights: Vec<i8> = raw.iter().map(|&b| b as i8).collect();
    let mut biases = Vec::with_capacity(out_dim);
    for _ in 0..out_dim {
        biases.push(r.i32("dense bias")?);
    }

    Ok(QuantizedModel {
        strategy,
        height,
        width,
        filters,
        num_classes,
        norm_stats,
        input,
        conv_layers,
        dense: QuantizedDense { in_dim, out_dim, weights, weight_scales, biases },
    })
}
