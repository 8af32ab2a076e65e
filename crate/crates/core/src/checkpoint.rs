//! `LFTC` checkpoints for single networks and LIFT models.
//!
//! Byte layout, little-endian throughout:
//!
//! ```text
//! "LFTC"  u32 version (1)  u8 kind (0 = network, 1 = LIFT)
//! stack:  u32 in, u32 out, u32 sine layers, u32 width,
//!         f64 omega0, f64 hidden omega, f64 gamma, u8 residual, u8 input map
//! LIFT only:
//!         u32 dims, u32 regions per dim,
//!         u32 x 8 latent shape (dims, global, mid cells, mid, local cells,
//!         local, fused, alpha), u8 hierarchy, u8 generator bias
//! u32 length + UTF-8 architecture fingerprint
//! u64 training step, u8 optimizer present
//!   [f64 lr, u64 Adam step, u32 n, n first moments, n second moments]
//! u32 tensor count, then LFT1 tensors in parameter order
//! ```
//!
//! Parameter order is the network's own; for LIFT it is the bank, every
//! generator tensor (active or not) and the three inner rates.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndgrad::{Adam, Tensor};

use crate::error::{LiftError, Result};
use crate::hlg::LatentShape;
use crate::model::{fingerprint, LiftModel};
use crate::nets::{InputMap, Mlp, StackShape};
use crate::partition::PartitionSpec;
use crate::rng::rng_for;

const MAGIC: &[u8; 4] = b"LFTC";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Network {
    Mlp(Mlp),
    Lift(LiftModel),
}

impl Network {
    pub fn fingerprint(&self) -> String {
        match self {
            Network::Mlp(m) => mlp_fingerprint(m),
            Network::Lift(m) => m.fingerprint(),
        }
    }

    fn tensors(&self) -> Vec<&Tensor> {
        match self {
            Network::Mlp(m) => m.params(),
            Network::Lift(m) => {
                let mut out = m.bank.params();
                out.extend(m.hlg.all_tensors());
                out.extend(m.inner_rates.iter());
                out
            }
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Network::Mlp(m) => m.params_mut(),
            Network::Lift(m) => {
                let mut out = m.bank.params_mut();
                out.extend(m.hlg.all_tensors_mut());
                out.extend(m.inner_rates.iter_mut());
                out
            }
        }
    }
}

pub fn mlp_fingerprint(m: &Mlp) -> String {
    let s = &m.shape;
    fingerprint(&format!(
        "mlp in={} out={} hidden={} width={} w0={} wh={} gamma={} residual={} map={:?}",
        s.in_dim, s.out_dim, s.hidden_layers, s.width, s.first_omega, s.hidden_omega, s.gamma, s.residual, m.input_map
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    /// Completed training steps (outer iterations for LIFT).
    pub step: u64,
    pub optimizer: Option<Adam>,
}

impl Checkpoint {
    pub fn fingerprint(&self) -> String {
        self.network.fingerprint()
    }

    /// Fails with both fingerprints unless the checkpoint holds `expected`.
    pub fn expect_fingerprint(&self, expected: &str) -> Result<()> {
        let found = self.fingerprint();
        if found != expected {
            return Err(LiftError::Fingerprint {
                expected: expected.to_string(),
                found,
            });
        }
        Ok(())
    }

    pub fn into_mlp(self) -> Result<Mlp> {
        match self.network {
            Network::Mlp(m) => Ok(m),
            Network::Lift(_) => Err(LiftError::Config("checkpoint holds a LIFT model, not a single network".into())),
        }
    }

    pub fn into_lift(self) -> Result<LiftModel> {
        match self.network {
            Network::Lift(m) => Ok(m),
            Network::Mlp(_) => Err(LiftError::Config("checkpoint holds a single network, not a LIFT model".into())),
        }
    }
}

fn write_stack<W: Write>(w: &mut W, s: &StackShape, map: InputMap) -> Result<()> {
    for v in [s.in_dim, s.out_dim, s.hidden_layers, s.width] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for v in [s.first_omega, s.hidden_omega, s.gamma] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&[s.residual as u8, (map == InputMap::Centered) as u8])?;
    Ok(())
}

pub fn write_checkpoint<W: Write>(w: &mut W, ck: &Checkpoint) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    match &ck.network {
        Network::Mlp(m) => {
            w.write_all(&[0])?;
            write_stack(w, &m.shape, m.input_map)?;
        }
        Network::Lift(m) => {
            w.write_all(&[1])?;
            write_stack(w, &m.bank.shape, InputMap::Identity)?;
            let spec = m.spec();
            let l = m.latent_shape();
            for v in [
                spec.dims(),
                spec.per_dim(),
                l.dims,
                l.global_dim,
                l.mid_cells,
                l.mid_dim,
                l.local_cells,
                l.local_dim,
                l.fused_dim,
                l.alpha_dim,
            ] {
                w.write_all(&(v as u32).to_le_bytes())?;
            }
            w.write_all(&[m.hlg.hierarchy as u8, m.hlg.bias as u8])?;
        }
    }
    let fp = ck.fingerprint();
    w.write_all(&(fp.len() as u32).to_le_bytes())?;
    w.write_all(fp.as_bytes())?;
    w.write_all(&ck.step.to_le_bytes())?;
    match &ck.optimizer {
        None => w.write_all(&[0])?,
        Some(adam) => {
            w.write_all(&[1])?;
            w.write_all(&adam.lr.to_le_bytes())?;
            w.write_all(&adam.steps_taken().to_le_bytes())?;
            let (m, v) = adam.moments();
            w.write_all(&(m.len() as u32).to_le_bytes())?;
            for t in m.iter().chain(v) {
                t.write_to(w)?;
            }
        }
    }
    let tensors = ck.network.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        t.write_to(w)?;
    }
    Ok(())
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut w, ck)?;
    w.flush()?;
    Ok(())
}

/// Offset-tracking little-endian reader.
struct Decoder<'a, R> {
    r: &'a mut R,
    off: u64,
    name: &'a str,
}

impl<R: Read> Decoder<'_, R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.r
            .read_exact(&mut buf)
            .map_err(|_| LiftError::parse(self.name, self.off, "unexpected end of file"))?;
        self.off += n as u64;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn flag(&mut self) -> Result<bool> {
        let at = self.off;
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(LiftError::parse(self.name, at, format!("flag byte {v} is not 0 or 1"))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    fn size(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let name = self.name;
        Tensor::read_from(self.r, &mut self.off).map_err(|e| match e {
            ndgrad::GradError::Format { offset, msg } => LiftError::parse(name, offset, msg),
            other => other.into(),
        })
    }

    fn fail(&self, at: u64, msg: impl Into<String>) -> LiftError {
        LiftError::parse(self.name, at, msg)
    }
}

fn read_stack<R: Read>(d: &mut Decoder<R>) -> Result<(StackShape, InputMap)> {
    let (in_dim, out_dim, hidden_layers, width) = (d.size()?, d.size()?, d.size()?, d.size()?);
    let (first_omega, hidden_omega, gamma) = (d.f64()?, d.f64()?, d.f64()?);
    let residual = d.flag()?;
    let map = if d.flag()? {
        InputMap::Centered
    } else {
        InputMap::Identity
    };
    let shape = StackShape {
        in_dim,
        out_dim,
        hidden_layers,
        width,
        first_omega,
        hidden_omega,
        gamma,
        residual,
    };
    Ok((shape, map))
}

pub fn read_checkpoint<R: Read>(r: &mut R, name: &str) -> Result<Checkpoint> {
    let mut d = Decoder { r, off: 0, name };
    if d.bytes(4)? != MAGIC {
        return Err(d.fail(0, "bad magic, expected LFTC"));
    }
    let version = d.u32()?;
    if version != VERSION {
        return Err(d.fail(4, format!("unsupported version {version}")));
    }
    let kind_at = d.off;
    let kind = d.u8()?;
    let header_at = d.off;
    let (shape, map) = read_stack(&mut d)?;
    let bad_header = |e: LiftError| LiftError::parse(name, header_at, format!("invalid architecture: {e}"));
    // Weights are overwritten below; the seed only fills placeholders.
    let mut rng = rng_for(0, 0);
    let mut network = match kind {
        0 => Network::Mlp(Mlp::new(shape, map, &mut rng).map_err(bad_header)?),
        1 => {
            let (dims, per_dim) = (d.size()?, d.size()?);
            let mut v = [0usize; 8];
            for x in v.iter_mut() {
                *x = d.size()?;
            }
            let latent = LatentShape {
                dims: v[0],
                global_dim: v[1],
                mid_cells: v[2],
                mid_dim: v[3],
                local_cells: v[4],
                local_dim: v[5],
                fused_dim: v[6],
                alpha_dim: v[7],
            };
            let (hierarchy, bias) = (d.flag()?, d.flag()?);
            let spec = PartitionSpec::new(dims, per_dim).map_err(bad_header)?;
            Network::Lift(
                LiftModel::new(spec, shape, latent, hierarchy, bias, 1.0, &mut rng).map_err(bad_header)?,
            )
        }
        k => return Err(d.fail(kind_at, format!("unknown model kind {k}"))),
    };
    let fp_at = d.off;
    let fl = d.size()?;
    let stored = String::from_utf8(d.bytes(fl)?).map_err(|_| d.fail(fp_at, "fingerprint is not UTF-8"))?;
    if stored != network.fingerprint() {
        return Err(LiftError::Fingerprint {
            expected: stored,
            found: network.fingerprint(),
        });
    }
    let step = d.u64()?;
    let optimizer = if d.flag()? {
        let lr = d.f64()?;
        let adam_step = d.u64()?;
        let n = d.size()?;
        let m = (0..n).map(|_| d.tensor()).collect::<Result<Vec<_>>>()?;
        let v = (0..n).map(|_| d.tensor()).collect::<Result<Vec<_>>>()?;
        let at = d.off;
        Some(Adam::restore(lr, adam_step, m, v).map_err(|e| d.fail(at, e.to_string()))?)
    } else {
        None
    };
    let count_at = d.off;
    let count = d.size()?;
    let expected = network.tensors().len();
    if count != expected {
        return Err(d.fail(count_at, format!("{count} tensors, architecture needs {expected}")));
    }
    for slot in network.tensors_mut() {
        let at = d.off;
        let t = d.tensor()?;
        if t.shape() != slot.shape() {
            return Err(d.fail(at, format!("tensor shape {:?}, expected {:?}", t.shape(), slot.shape())));
        }
        *slot = t;
    }
    Ok(Checkpoint {
        network,
        step,
        optimizer,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(LiftError::MissingInput(path.to_path_buf()));
    }
    let mut r = BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(&mut r, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::build_relift;

    fn lift() -> LiftModel {
        let spec = PartitionSpec::new(2, 2).unwrap();
        let stack = StackShape {
            in_dim: 2,
            out_dim: 3,
            hidden_layers: 2,
            width: 6,
            first_omega: 20.0,
            hidden_omega: 20.0,
            gamma: 2.0,
            residual: true,
        };
        let latent = LatentShape::new(2, 4, (1, 3), (2, 2));
        LiftModel::new(spec, stack, latent, true, true, 0.7, &mut rng_for(5, 1)).unwrap()
    }

    fn round_trip(ck: &Checkpoint) -> Checkpoint {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, ck).unwrap();
        read_checkpoint(&mut buf.as_slice(), "mem").unwrap()
    }

    #[test]
    fn mlp_and_lift_round_trip() {
        let net = build_relift(2, 3, 3, 8, 30.0, 2.0, &mut rng_for(1, 1)).unwrap();
        let ck = Checkpoint {
            network: Network::Mlp(net),
            step: 7,
            optimizer: None,
        };
        assert_eq!(round_trip(&ck), ck);
        let mut adam = Adam::new(1e-3);
        let mut model = lift();
        let grads: Vec<Tensor> = model.trainable_params_mut(true).iter().map(|t| t.map(|_| 0.1)).collect();
        adam.step(&mut model.trainable_params_mut(true), &grads).unwrap();
        let ck = Checkpoint {
            network: Network::Lift(model),
            step: 1,
            optimizer: Some(adam),
        };
        assert_eq!(round_trip(&ck), ck);
    }

    #[test]
    fn corruption_is_located() {
        let ck = Checkpoint {
            network: Network::Lift(lift()),
            step: 0,
            optimizer: None,
        };
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ck).unwrap();
        let cut = buf.len() - 5;
        match read_checkpoint(&mut &buf[..cut], "cut") {
            Err(LiftError::Parse { offset, .. }) => assert!(offset > 100 && offset <= cut as u64),
            other => panic!("{other:?}"),
        }
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(matches!(read_checkpoint(&mut bad.as_slice(), "k"), Err(LiftError::Parse { offset: 8, .. })));
    }

    #[test]
    fn fingerprint_mismatch_names_both() {
        let ck = Checkpoint {
            network: Network::Lift(lift()),
            step: 0,
            optimizer: None,
        };
        let err = ck.expect_fingerprint("0000").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0000") && msg.contains(&ck.fingerprint()));
    }
}
