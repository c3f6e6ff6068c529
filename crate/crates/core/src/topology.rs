//! Network architecture: layer descriptions, the architecture-string parser,
//! weight initialization, and checkpoint serialization.
//!
//! Architectures are written in the compact dash notation, e.g. `784-400-10`
//! for a dense stack or `28x28x1-15C5-P2-40C5-P2-300-10` mixing convolution
//! (`15C5`: 15 output channels, 5x5 kernel, valid, stride 1), average pooling
//! (`P2`: 2x2 window) and dense tails. The first token is the input shape.

use crate::error::{Error, Result};
use crate::lif::LifParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

/// Shape of the activation flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Flat(usize),
    /// Channel-major feature maps, laid out `[c][h][w]`.
    Map { c: usize, h: usize, w: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Map { c, h, w } => c * h * w,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Shape::Flat(n) => write!(f, "{n}"),
            Shape::Map { c, h, w } => write!(f, "{h}x{w}x{c}"),
        }
    }
}

/// One layer's structure. Shapes are fully resolved at build time.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        in_h: usize,
        in_w: usize,
    },
    AvgPool {
        window: usize,
        ch: usize,
        in_h: usize,
        in_w: usize,
    },
}

impl LayerKind {
    pub fn out_shape(&self) -> Shape {
        match *self {
            LayerKind::Dense { out_dim, .. } => Shape::Flat(out_dim),
            LayerKind::Conv {
                out_ch,
                kernel,
                stride,
                in_h,
                in_w,
                ..
            } => Shape::Map {
                c: out_ch,
                h: (in_h - kernel) / stride + 1,
                w: (in_w - kernel) / stride + 1,
            },
            LayerKind::AvgPool {
                window,
                ch,
                in_h,
                in_w,
            } => Shape::Map {
                c: ch,
                h: in_h / window,
                w: in_w / window,
            },
        }
    }

    pub fn in_len(&self) -> usize {
        match *self {
            LayerKind::Dense { in_dim, .. } => in_dim,
            LayerKind::Conv {
                in_ch, in_h, in_w, ..
            } => in_ch * in_h * in_w,
            LayerKind::AvgPool {
                ch, in_h, in_w, ..
            } => ch * in_h * in_w,
        }
    }

    pub fn out_len(&self) -> usize {
        self.out_shape().len()
    }

    /// Pooling layers are stateless spike averagers; the rest carry LIF state.
    pub fn is_lif(&self) -> bool {
        !matches!(self, LayerKind::AvgPool { .. })
    }
}

/// One layer with its parameters.
///
/// Dense weights are row-major `[out][in]`; conv kernels are `[oc][ic][ky][kx]`.
/// Pool layers hold no parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub lif: LifParams,
}

impl Layer {
    fn weight_len(kind: &LayerKind) -> usize {
        match *kind {
            LayerKind::Dense { in_dim, out_dim } => in_dim * out_dim,
            LayerKind::Conv {
                in_ch,
                out_ch,
                kernel,
                ..
            } => out_ch * in_ch * kernel * kernel,
            LayerKind::AvgPool { .. } => 0,
        }
    }

    fn bias_len(kind: &LayerKind) -> usize {
        match *kind {
            LayerKind::Dense { out_dim, .. } => out_dim,
            LayerKind::Conv { out_ch, .. } => out_ch,
            LayerKind::AvgPool { .. } => 0,
        }
    }
}

/// A complete network: architecture, parameters, and the time window.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input_shape: Shape,
    pub layers: Vec<Layer>,
    pub time_window: usize,
    pub arch: String,
}

impl Network {
    /// Builds an unweighted network from an architecture string; all weights
    /// zero until [`Network::init_params`].
    pub fn from_arch(arch: &str, lif: LifParams, time_window: usize) -> Result<Network> {
        if time_window == 0 {
            return Err(Error::Config("time window must be >= 1".into()));
        }
        let (input_shape, kinds) = parse_arch(arch)?;
        let layers = kinds
            .into_iter()
            .map(|kind| {
                let w = vec![0.0; Layer::weight_len(&kind)];
                let b = vec![0.0; Layer::bias_len(&kind)];
                Layer { kind, w, b, lif }
            })
            .collect();
        Ok(Network {
            input_shape,
            layers,
            time_window,
            arch: arch.to_string(),
        })
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map(|l| l.kind.out_len()).unwrap_or(0)
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.len()
    }

    /// Draws every weight from U[-1, 1], then scales each dense row / conv
    /// output-channel slab to unit L2 norm. Biases start at zero. The
    /// (measure-zero) zero-norm draw is redrawn.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::math::derive_seed(
            seed,
            crate::math::SeedDomain::Init,
            0,
            0,
        ));
        for layer in &mut self.layers {
            let (groups, group_len) = match layer.kind {
                LayerKind::Dense { in_dim, out_dim } => (out_dim, in_dim),
                LayerKind::Conv {
                    in_ch,
                    out_ch,
                    kernel,
                    ..
                } => (out_ch, in_ch * kernel * kernel),
                LayerKind::AvgPool { .. } => continue,
            };
            for g in 0..groups {
                let row = &mut layer.w[g * group_len..(g + 1) * group_len];
                loop {
                    for v in row.iter_mut() {
                        *v = rng.gen_range(-1.0..=1.0);
                    }
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        for v in row.iter_mut() {
                            *v /= norm;
                        }
                        break;
                    }
                }
            }
            for v in &mut layer.b {
                *v = 0.0;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }
}

/// Parses the dash notation into an input shape plus layer kinds.
pub fn parse_arch(arch: &str) -> Result<(Shape, Vec<LayerKind>)> {
    let tokens: Vec<&str> = arch.split('-').collect();
    if tokens.len() < 2 {
        return Err(Error::Config(format!(
            "architecture '{arch}' needs an input and at least one layer"
        )));
    }
    let input_shape = parse_input_shape(tokens[0], arch)?;
    let mut shape = input_shape;
    let mut kinds = Vec::new();
    for tok in &tokens[1..] {
        let kind = parse_layer_token(tok, shape, arch)?;
        shape = kind.out_shape();
        kinds.push(kind);
    }
    match kinds.last() {
        Some(LayerKind::Dense { .. }) => Ok((input_shape, kinds)),
        _ => Err(Error::Config(format!(
            "architecture '{arch}' must end with a dense layer"
        ))),
    }
}

fn parse_input_shape(tok: &str, arch: &str) -> Result<Shape> {
    let dims: Vec<&str> = tok.split('x').collect();
    match dims.len() {
        1 => {
            let n: usize = dims[0]
                .parse()
                .map_err(|_| Error::Config(format!("bad input size '{tok}' in '{arch}'")))?;
            if n == 0 {
                return Err(Error::Config(format!("zero input size in '{arch}'")));
            }
            Ok(Shape::Flat(n))
        }
        3 => {
            let h: usize = dims[0]
                .parse()
                .map_err(|_| Error::Config(format!("bad input shape '{tok}' in '{arch}'")))?;
            let w: usize = dims[1]
                .parse()
                .map_err(|_| Error::Config(format!("bad input shape '{tok}' in '{arch}'")))?;
            let c: usize = dims[2]
                .parse()
                .map_err(|_| Error::Config(format!("bad input shape '{tok}' in '{arch}'")))?;
            if h == 0 || w == 0 || c == 0 {
                return Err(Error::Config(format!("zero input dim in '{arch}'")));
            }
            Ok(Shape::Map { c, h, w })
        }
        _ => Err(Error::Config(format!(
            "input shape '{tok}' in '{arch}' must be N or HxWxC"
        ))),
    }
}

fn parse_layer_token(tok: &str, in_shape: Shape, arch: &str) -> Result<LayerKind> {
    if let Some(rest) = tok.strip_prefix('P') {
        let window: usize = rest
            .parse()
            .map_err(|_| Error::Config(format!("bad pool token '{tok}' in '{arch}'")))?;
        if window == 0 {
            return Err(Error::Config(format!("zero pool window in '{arch}'")));
        }
        let Shape::Map { c, h, w } = in_shape else {
            return Err(Error::Config(format!(
                "pool '{tok}' in '{arch}' needs a feature-map input, got {in_shape}"
            )));
        };
        if h % window != 0 || w % window != 0 {
            return Err(Error::Config(format!(
                "pool window {window} does not divide {h}x{w} in '{arch}'"
            )));
        }
        return Ok(LayerKind::AvgPool {
            window,
            ch: c,
            in_h: h,
            in_w: w,
        });
    }
    if let Some(pos) = tok.find('C') {
        let out_ch: usize = tok[..pos]
            .parse()
            .map_err(|_| Error::Config(format!("bad conv token '{tok}' in '{arch}'")))?;
        let kernel: usize = tok[pos + 1..]
            .parse()
            .map_err(|_| Error::Config(format!("bad conv token '{tok}' in '{arch}'")))?;
        if out_ch == 0 || kernel == 0 {
            return Err(Error::Config(format!("zero conv dim in '{tok}'")));
        }
        let Shape::Map { c, h, w } = in_shape else {
            return Err(Error::Config(format!(
                "conv '{tok}' in '{arch}' needs a feature-map input, got {in_shape}"
            )));
        };
        if kernel > h || kernel > w {
            return Err(Error::Config(format!(
                "kernel {kernel} exceeds input {h}x{w} in '{arch}'"
            )));
        }
        return Ok(LayerKind::Conv {
            in_ch: c,
            out_ch,
            kernel,
            stride: 1,
            in_h: h,
            in_w: w,
        });
    }
    let out_dim: usize = tok
        .parse()
        .map_err(|_| Error::Config(format!("unknown layer token '{tok}' in '{arch}'")))?;
    if out_dim == 0 {
        return Err(Error::Config(format!("zero dense width in '{arch}'")));
    }
    Ok(LayerKind::Dense {
        in_dim: in_shape.len(),
        out_dim,
    })
}

// --- checkpoint serialization -------------------------------------------

const CKPT_MAGIC: &[u8; 8] = b"SNNCKPT1";

/// Writes a versioned binary checkpoint: magic, architecture string, time
/// window, per-layer LIF params and parameters, plus a caller-supplied
/// provenance tag (normally the resolved config hash).
pub fn save_checkpoint(net: &Network, tag: &str, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    write_str(&mut buf, &net.arch);
    write_u32(&mut buf, net.time_window as u32);
    write_u32(&mut buf, net.layers.len() as u32);
    for layer in &net.layers {
        match layer.kind {
            LayerKind::Dense { in_dim, out_dim } => {
                buf.push(0);
                write_u32(&mut buf, in_dim as u32);
                write_u32(&mut buf, out_dim as u32);
            }
            LayerKind::Conv {
                in_ch,
                out_ch,
                kernel,
                stride,
                in_h,
                in_w,
            } => {
                buf.push(1);
                for v in [in_ch, out_ch, kernel, stride, in_h, in_w] {
                    write_u32(&mut buf, v as u32);
                }
            }
            LayerKind::AvgPool {
                window,
                ch,
                in_h,
                in_w,
            } => {
                buf.push(2);
                for v in [window, ch, in_h, in_w] {
                    write_u32(&mut buf, v as u32);
                }
            }
        }
        for v in [layer.lif.tau, layer.lif.v_th, layer.lif.dt_ms] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        write_u32(&mut buf, layer.w.len() as u32);
        for v in &layer.w {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        write_u32(&mut buf, layer.b.len() as u32);
        for v in &layer.b {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_str(&mut buf, tag);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Loads a checkpoint written by [`save_checkpoint`]; returns the network and
/// its provenance tag.
pub fn load_checkpoint(path: &Path) -> Result<(Network, String)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut r = ByteReader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    let magic = r.take(8)?;
    if magic != CKPT_MAGIC {
        return Err(r.format_err(0, "bad checkpoint magic"));
    }
    let arch = r.read_str()?;
    let time_window = r.read_u32()? as usize;
    let n_layers = r.read_u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let tag = r.read_u8()?;
        let kind = match tag {
            0 => {
                let in_dim = r.read_u32()? as usize;
                let out_dim = r.read_u32()? as usize;
                LayerKind::Dense { in_dim, out_dim }
            }
            1 => {
                let mut v = [0usize; 6];
                for slot in &mut v {
                    *slot = r.read_u32()? as usize;
                }
                LayerKind::Conv {
                    in_ch: v[0],
                    out_ch: v[1],
                    kernel: v[2],
                    stride: v[3],
                    in_h: v[4],
                    in_w: v[5],
                }
            }
            2 => {
                let mut v = [0usize; 4];
                for slot in &mut v {
                    *slot = r.read_u32()? as usize;
                }
                LayerKind::AvgPool {
                    window: v[0],
                    ch: v[1],
                    in_h: v[2],
                    in_w: v[3],
                }
            }
            other => {
                return Err(r.format_err(r.pos as u64 - 1, format!("unknown layer tag {other}")))
            }
        };
        let tau = r.read_f64()?;
        let v_th = r.read_f64()?;
        let dt_ms = r.read_f64()?;
        let lif = LifParams::new(tau, v_th, dt_ms)?;
        let wn = r.read_u32()? as usize;
        if wn != Layer::weight_len(&kind) {
            return Err(r.format_err(
                r.pos as u64,
                format!("weight count {wn} does not match layer {kind:?}"),
            ));
        }
        let w = r.read_f64_vec(wn)?;
        let bn = r.read_u32()? as usize;
        if bn != Layer::bias_len(&kind) {
            return Err(r.format_err(
                r.pos as u64,
                format!("bias count {bn} does not match layer {kind:?}"),
            ));
        }
        let b = r.read_f64_vec(bn)?;
        layers.push(Layer { kind, w, b, lif });
    }
    let tag = r.read_str()?;
    let (input_shape, kinds) = parse_arch(&arch)?;
    for (got, want) in layers.iter().zip(&kinds) {
        if &got.kind != want {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: 8,
                reason: format!(
                    "checkpoint layers disagree with architecture '{arch}': {:?} vs {want:?}",
                    got.kind
                ),
            });
        }
    }
    Ok((
        Network {
            input_shape,
            layers,
            time_window,
            arch,
        },
        tag,
    ))
}

fn write_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn write_str(buf: &mut Vec<u8>, s: &str) {
    write_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn format_err(&self, offset: u64, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.format_err(self.pos as u64, format!("truncated: wanted {n} bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn read_u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn read_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn read_f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn read_f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn read_str(&mut self) -> Result<String> {
        let n = self.read_u32()? as usize;
        let at = self.pos as u64;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.format_err(at, "invalid utf8 string"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lif() -> LifParams {
        LifParams::new(0.1, 1.5, 1.0).unwrap()
    }

    #[test]
    fn parses_dense_chain() {
        let (input, kinds) = parse_arch("784-400-10").unwrap();
        assert_eq!(input, Shape::Flat(784));
        assert_eq!(
            kinds,
            vec![
                LayerKind::Dense {
                    in_dim: 784,
                    out_dim: 400
                },
                LayerKind::Dense {
                    in_dim: 400,
                    out_dim: 10
                },
            ]
        );
    }

    #[test]
    fn parses_conv_net_with_expected_shapes() {
        // 28x28 -C5-> 24x24 -P2-> 12x12 -C5-> 8x8 -P2-> 4x4, flat 40*16=640
        let (input, kinds) = parse_arch("28x28x1-15C5-P2-40C5-P2-300-10").unwrap();
        assert_eq!(input, Shape::Map { c: 1, h: 28, w: 28 });
        let shapes: Vec<Shape> = kinds.iter().map(|k| k.out_shape()).collect();
        assert_eq!(shapes[0], Shape::Map { c: 15, h: 24, w: 24 });
        assert_eq!(shapes[1], Shape::Map { c: 15, h: 12, w: 12 });
        assert_eq!(shapes[2], Shape::Map { c: 40, h: 8, w: 8 });
        assert_eq!(shapes[3], Shape::Map { c: 40, h: 4, w: 4 });
        assert_eq!(shapes[4], Shape::Flat(300));
        assert_eq!(shapes[5], Shape::Flat(10));
        match kinds[4] {
            LayerKind::Dense { in_dim, .. } => assert_eq!(in_dim, 640),
            _ => panic!("expected dense"),
        }
    }

    #[test]
    fn rejects_malformed_architectures() {
        assert!(parse_arch("784").is_err());
        assert!(parse_arch("784-0").is_err());
        assert!(parse_arch("784-4x").is_err());
        // pool on flat input
        assert!(parse_arch("784-P2-10").is_err());
        // pool window does not divide
        assert!(parse_arch("28x28x1-P3-10").is_err());
        // must end dense
        assert!(parse_arch("28x28x1-4C3").is_err());
        // kernel larger than map
        assert!(parse_arch("4x4x1-2C5-10").is_err());
    }

    #[test]
    fn init_rows_have_unit_norm() {
        let mut net = Network::from_arch("20-13-7", lif(), 5).unwrap();
        net.init_params(99);
        for layer in &net.layers {
            let LayerKind::Dense { in_dim, out_dim } = layer.kind else {
                unreachable!()
            };
            for r in 0..out_dim {
                let row = &layer.w[r * in_dim..(r + 1) * in_dim];
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-12);
            }
            assert!(layer.b.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn init_conv_slabs_have_unit_norm() {
        let mut net = Network::from_arch("8x8x2-3C3-4", lif(), 3).unwrap();
        net.init_params(7);
        let conv = &net.layers[0];
        let slab = 2 * 3 * 3;
        for oc in 0..3 {
            let s = &conv.w[oc * slab..(oc + 1) * slab];
            let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn init_is_deterministic() {
        let mut a = Network::from_arch("12-6-3", lif(), 4).unwrap();
        let mut b = Network::from_arch("12-6-3", lif(), 4).unwrap();
        a.init_params(5);
        b.init_params(5);
        assert_eq!(a, b);
        let mut c = Network::from_arch("12-6-3", lif(), 4).unwrap();
        c.init_params(6);
        assert_ne!(a, c);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let mut net = Network::from_arch("6x6x1-2C3-P2-5-3", lif(), 7).unwrap();
        net.init_params(42);
        save_checkpoint(&net, "deadbeef", &path).unwrap();
        let (loaded, tag) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, net);
        assert_eq!(tag, "deadbeef");
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let mut net = Network::from_arch("4-3", lif(), 2).unwrap();
        net.init_params(1);
        save_checkpoint(&net, "", &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
        // truncation
        save_checkpoint(&net, "", &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "got {err:?}");
    }
}
