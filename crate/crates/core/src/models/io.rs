//! Bundle checkpoints: a line-oriented geometry header followed by raw
//! little-endian f64 tensors. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::nn::{Activation, Conv1d, ConvLayer, ConvStack};

use super::frontend::MelFrontend;
use super::{Asr, BundleMeta, Decoder, Encoder, ModelBundle, ModelError, ToyTts};

const MAGIC: &str = "SOTTO-BUNDLE v1";

fn act_tag(a: Activation) -> &'static str {
    match a {
        Activation::Identity => "id",
        Activation::Elu => "elu",
        Activation::Tanh => "tanh",
    }
}

fn parse_act(s: &str) -> Result<Activation, ModelError> {
    match s {
        "id" => Ok(Activation::Identity),
        "elu" => Ok(Activation::Elu),
        "tanh" => Ok(Activation::Tanh),
        other => Err(ModelError::SchemaMismatch(format!(
            "unknown activation tag {other:?}"
        ))),
    }
}

fn conv_sig(c: &Conv1d) -> String {
    format!("{}:{}:{}:{}", c.in_ch, c.out_ch, c.k, c.stride)
}

fn write_tensor<W: Write>(w: &mut W, name: &str, rows: usize, cols: usize, values: impl Iterator<Item = f64>) -> std::io::Result<()> {
    writeln!(w, "tensor {name} {rows} {cols}")?;
    let mut n = 0usize;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
        n += 1;
    }
    assert_eq!(n, rows * cols, "tensor {name} size");
    Ok(())
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    let m = &bundle.meta;
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "encoder_id={}", m.encoder_id)?;
    writeln!(w, "decoder_id={}", m.decoder_id)?;
    writeln!(w, "asr_id={}", m.asr_id)?;
    writeln!(w, "tts_id={}", m.tts_id)?;
    writeln!(w, "latent_channels={}", m.latent_channels)?;
    writeln!(w, "frame_hop={}", m.frame_hop)?;
    writeln!(w, "alphabet=a-z,space")?;
    writeln!(w, "seed={}", m.seed)?;
    writeln!(w, "ae_val_rel_l2={:016x}", m.ae_val_rel_l2.to_bits())?;
    writeln!(w, "asr_train_exact={:016x}", m.asr_train_exact.to_bits())?;
    writeln!(w, "tts_round_trip={:016x}", m.tts_round_trip.to_bits())?;
    writeln!(
        w,
        "frontend={}:{}:{}",
        bundle.asr.frontend.frame_length, bundle.asr.frontend.hop, bundle.asr.frontend.n_mels
    )?;
    writeln!(w, "encoder={}", conv_sig(&bundle.encoder.conv))?;
    writeln!(w, "decoder={}", conv_sig(&bundle.decoder.conv))?;
    let head: Vec<String> = bundle
        .asr
        .head
        .layers
        .iter()
        .map(|l| format!("{}:{}", conv_sig(&l.conv), act_tag(l.act)))
        .collect();
    writeln!(w, "asr_head={}", head.join(","))?;
    writeln!(w)?;

    let enc = &bundle.encoder.conv;
    write_tensor(&mut w, "enc.w", enc.w.nrows(), enc.w.ncols(), enc.w.iter().cloned())?;
    write_tensor(&mut w, "enc.b", 1, enc.b.len(), enc.b.iter().cloned())?;
    let dec = &bundle.decoder.conv;
    write_tensor(&mut w, "dec.w", dec.w.nrows(), dec.w.ncols(), dec.w.iter().cloned())?;
    write_tensor(&mut w, "dec.b", 1, dec.b.len(), dec.b.iter().cloned())?;
    for (i, layer) in bundle.asr.head.layers.iter().enumerate() {
        let c = &layer.conv;
        write_tensor(&mut w, &format!("asr.{i}.w"), c.w.nrows(), c.w.ncols(), c.w.iter().cloned())?;
        write_tensor(&mut w, &format!("asr.{i}.b"), 1, c.b.len(), c.b.iter().cloned())?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn line(&mut self) -> Result<String, ModelError> {
        let mut bytes = Vec::new();
        let mut buf = [0u8; 1];
        loop {
            let n = self.inner.read(&mut buf)?;
            if n == 0 {
                return Err(ModelError::SchemaMismatch("truncated header".into()));
            }
            if buf[0] == b'\n' {
                break;
            }
            bytes.push(buf[0]);
        }
        String::from_utf8(bytes)
            .map_err(|_| ModelError::SchemaMismatch("non-utf8 header line".into()))
    }

    fn tensor(&mut self, want: &str) -> Result<Array2<f64>, ModelError> {
        let line = self.line()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "tensor" || parts[1] != want {
            return Err(ModelError::SchemaMismatch(format!(
                "expected tensor {want}, found {line:?}"
            )));
        }
        let rows: usize = parts[2]
            .parse()
            .map_err(|_| ModelError::SchemaMismatch("bad tensor dims".into()))?;
        let cols: usize = parts[3]
            .parse()
            .map_err(|_| ModelError::SchemaMismatch("bad tensor dims".into()))?;
        let mut raw = vec![0u8; rows * cols * 8];
        self.inner.read_exact(&mut raw).map_err(|_| {
            ModelError::SchemaMismatch(format!("tensor {want} payload truncated"))
        })?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| ModelError::SchemaMismatch(e.to_string()))
    }
}

fn kv(line: &str, key: &str) -> Result<String, ModelError> {
    line.strip_prefix(&format!("{key}="))
        .map(str::to_string)
        .ok_or_else(|| ModelError::SchemaMismatch(format!("expected {key}=..., found {line:?}")))
}

fn parse_usize(s: &str) -> Result<usize, ModelError> {
    s.parse()
        .map_err(|_| ModelError::SchemaMismatch(format!("bad integer {s:?}")))
}

fn parse_bits(s: &str) -> Result<f64, ModelError> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| ModelError::SchemaMismatch(format!("bad f64 bits {s:?}")))
}

fn parse_conv_sig(s: &str) -> Result<(usize, usize, usize, usize), ModelError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 4 {
        return Err(ModelError::SchemaMismatch(format!("bad conv signature {s:?}")));
    }
    Ok((
        parse_usize(parts[0])?,
        parse_usize(parts[1])?,
        parse_usize(parts[2])?,
        parse_usize(parts[3])?,
    ))
}

fn conv_from(sig: (usize, usize, usize, usize), w: Array2<f64>, b: Array2<f64>) -> Result<Conv1d, ModelError> {
    let (in_ch, out_ch, k, stride) = sig;
    if w.dim() != (out_ch, in_ch * k) || b.len() != out_ch {
        return Err(ModelError::SchemaMismatch(format!(
            "tensor shape {:?}/{} does not match signature {in_ch}:{out_ch}:{k}:{stride}",
            w.dim(),
            b.len()
        )));
    }
    Ok(Conv1d {
        w,
        b: Array1::from_iter(b.iter().cloned()),
        in_ch,
        out_ch,
        k,
        stride,
    })
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle, ModelError> {
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
    };
    let magic = r.line()?;
    if magic != MAGIC {
        return Err(ModelError::SchemaMismatch(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let encoder_id = kv(&r.line()?, "encoder_id")?;
    let decoder_id = kv(&r.line()?, "decoder_id")?;
    let asr_id = kv(&r.line()?, "asr_id")?;
    let tts_id = kv(&r.line()?, "tts_id")?;
    let latent_channels = parse_usize(&kv(&r.line()?, "latent_channels")?)?;
    let frame_hop = parse_usize(&kv(&r.line()?, "frame_hop")?)?;
    let alphabet = kv(&r.line()?, "alphabet")?;
    if alphabet != "a-z,space" {
        return Err(ModelError::SchemaMismatch(format!(
            "unsupported alphabet {alphabet:?}"
        )));
    }
    let seed = kv(&r.line()?, "seed")?
        .parse::<u64>()
        .map_err(|_| ModelError::SchemaMismatch("bad seed".into()))?;
    let ae_val_rel_l2 = parse_bits(&kv(&r.line()?, "ae_val_rel_l2")?)?;
    let asr_train_exact = parse_bits(&kv(&r.line()?, "asr_train_exact")?)?;
    let tts_round_trip = parse_bits(&kv(&r.line()?, "tts_round_trip")?)?;
    let front_sig = kv(&r.line()?, "frontend")?;
    let fparts: Vec<&str> = front_sig.split(':').collect();
    if fparts.len() != 3 {
        return Err(ModelError::SchemaMismatch("bad frontend signature".into()));
    }
    let frontend = MelFrontend::new(
        parse_usize(fparts[0])?,
        parse_usize(fparts[1])?,
        parse_usize(fparts[2])?,
        50.0,
        4800.0,
    );
    let enc_sig = parse_conv_sig(&kv(&r.line()?, "encoder")?)?;
    let dec_sig = parse_conv_sig(&kv(&r.line()?, "decoder")?)?;
    let head_line = kv(&r.line()?, "asr_head")?;
    let blank = r.line()?;
    if !blank.is_empty() {
        return Err(ModelError::SchemaMismatch("missing header terminator".into()));
    }

    if enc_sig.1 != latent_channels || dec_sig.0 != latent_channels || enc_sig.3 != frame_hop {
        return Err(ModelError::SchemaMismatch(
            "encoder/decoder latent geometries disagree with header".into(),
        ));
    }

    let enc_w = r.tensor("enc.w")?;
    let enc_b = r.tensor("enc.b")?;
    let dec_w = r.tensor("dec.w")?;
    let dec_b = r.tensor("dec.b")?;
    let encoder = Encoder {
        conv: conv_from(enc_sig, enc_w, enc_b)?,
    };
    let decoder = Decoder {
        conv: conv_from(dec_sig, dec_w, dec_b)?,
    };

    let mut layers = Vec::new();
    for (i, part) in head_line.split(',').enumerate() {
        let sub: Vec<&str> = part.rsplitn(2, ':').collect();
        if sub.len() != 2 {
            return Err(ModelError::SchemaMismatch(format!("bad head layer {part:?}")));
        }
        let act = parse_act(sub[0])?;
        let sig = parse_conv_sig(sub[1])?;
        let w = r.tensor(&format!("asr.{i}.w"))?;
        let b = r.tensor(&format!("asr.{i}.b"))?;
        layers.push(ConvLayer::new(conv_from(sig, w, b)?, act));
    }
    let asr = Asr {
        frontend,
        head: ConvStack::new(layers),
    };

    Ok(ModelBundle {
        meta: BundleMeta {
            encoder_id,
            decoder_id,
            asr_id,
            tts_id,
            latent_channels,
            frame_hop,
            seed,
            ae_val_rel_l2,
            asr_train_exact,
            tts_round_trip,
        },
        encoder,
        decoder,
        asr,
        tts: ToyTts::new(),
    })
}
