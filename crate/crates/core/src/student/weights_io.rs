//! Weight serialization: a versioned little-endian binary (magic, entry
//! table, float32 arrays) plus a JSON sidecar describing the architecture
//! and normalization bounds.

use crate::student::layers::Elem;
use crate::student::{ArchSpec, NormalizationBounds, StudentError, StudentNet};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"NSWB";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    version: u32,
    arch: ArchSpec,
    bounds: NormalizationBounds,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Every named tensor of the network, including the frozen normalization
/// statistics, in a stable order.
fn tensor_names<T: Elem>(net: &StudentNet<T>) -> Vec<String> {
    let mut names = net.param_names();
    for i in 0..net.bn.len() {
        names.push(format!("bn{i}.running_mean"));
        names.push(format!("bn{i}.running_var"));
    }
    names
}

fn tensors<T: Elem>(net: &StudentNet<T>) -> Vec<Vec<f64>> {
    let mut t: Vec<Vec<f64>> =
        net.params().iter().map(|p| p.iter().map(|&x| x.to_f64()).collect()).collect();
    for bn in &net.bn {
        t.push(bn.running_mean.clone());
        t.push(bn.running_var.clone());
    }
    t
}

pub fn save_weights<T: Elem>(
    net: &StudentNet<T>,
    bounds: &NormalizationBounds,
    path: &Path,
) -> Result<(), StudentError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let names = tensor_names(net);
    let arrays = tensors(net);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&VERSION.to_le_bytes())?;
    f.write_all(&(names.len() as u32).to_le_bytes())?;
    for (name, arr) in names.iter().zip(&arrays) {
        let nb = name.as_bytes();
        f.write_all(&(nb.len() as u16).to_le_bytes())?;
        f.write_all(nb)?;
        f.write_all(&(arr.len() as u32).to_le_bytes())?;
        for &x in arr {
            f.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    drop(f);
    let sidecar = Sidecar { version: VERSION, arch: net.arch.clone(), bounds: *bounds };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| StudentError::WeightFormat(e.to_string()))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Load a weight file into the deployment-precision network.
pub fn load_weights(path: &Path) -> Result<(StudentNet<f32>, NormalizationBounds), StudentError> {
    let text = std::fs::read_to_string(sidecar_path(path))?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| StudentError::WeightFormat(e.to_string()))?;
    if sidecar.version != VERSION {
        return Err(StudentError::WeightFormat(format!(
            "unsupported sidecar version {}",
            sidecar.version
        )));
    }
    let mut net = StudentNet::<f32>::init(sidecar.arch, 0)?;

    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    let bad = |m: String| StudentError::WeightFormat(m);
    if raw.len() < 12 || &raw[0..4] != MAGIC {
        return Err(bad("missing magic".into()));
    }
    let version = u32::from_le_bytes(raw[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n_entries = u32::from_le_bytes(raw[8..12].try_into().unwrap()) as usize;
    let mut pos = 12usize;
    let mut entries: Vec<(String, Vec<f64>)> = Vec::with_capacity(n_entries);
    for _ in 0..n_entries {
        if pos + 2 > raw.len() {
            return Err(bad("truncated entry header".into()));
        }
        let name_len = u16::from_le_bytes(raw[pos..pos + 2].try_into().unwrap()) as usize;
        pos += 2;
        if pos + name_len + 4 > raw.len() {
            return Err(bad("truncated entry name".into()));
        }
        let name = String::from_utf8_lossy(&raw[pos..pos + name_len]).into_owned();
        pos += name_len;
        let count = u32::from_le_bytes(raw[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if pos + 4 * count > raw.len() {
            return Err(bad(format!("truncated data for {name}")));
        }
        let mut data = Vec::with_capacity(count);
        for i in 0..count {
            let off = pos + 4 * i;
            data.push(f32::from_le_bytes(raw[off..off + 4].try_into().unwrap()) as f64);
        }
        pos += 4 * count;
        entries.push((name, data));
    }

    let names = tensor_names(&net);
    if entries.len() != names.len() {
        return Err(StudentError::ArchMismatch(format!(
            "expected {} tensors, file has {}",
            names.len(),
            entries.len()
        )));
    }
    for (want, (got, data)) in names.iter().zip(&entries) {
        if want != got {
            return Err(StudentError::ArchMismatch(format!("expected tensor {want}, found {got}")));
        }
        let target_len = {
            let regs = net.param_names();
            if let Some(idx) = regs.iter().position(|n| n == want) {
                net.params()[idx].len()
            } else {
                // Running statistics: channel count of the block.
                let bi: usize = want[2..want.find('.').unwrap()].parse().unwrap_or(usize::MAX);
                if bi >= net.bn.len() {
                    return Err(StudentError::ArchMismatch(format!("unknown tensor {got}")));
                }
                net.bn[bi].ch
            }
        };
        if data.len() != target_len {
            return Err(StudentError::ArchMismatch(format!(
                "tensor {got}: expected {target_len} values, found {}",
                data.len()
            )));
        }
    }
    // All validated; copy in.
    {
        let regs = net.param_names();
        let mut params = net.params_mut();
        for (name, data) in &entries {
            if let Some(idx) = regs.iter().position(|n| n == name) {
                for (p, &x) in params[idx].iter_mut().zip(data) {
                    *p = x as f32;
                }
            }
        }
    }
    for (name, data) in &entries {
        if let Some(rest) = name.strip_prefix("bn") {
            if let Some((bi, field)) = rest.split_once('.') {
                if field == "running_mean" || field == "running_var" {
                    let bi: usize = bi.parse().map_err(|_| {
                        StudentError::ArchMismatch(format!("bad tensor name {name}"))
                    })?;
                    if field == "running_mean" {
                        net.bn[bi].running_mean.copy_from_slice(data);
                    } else {
                        net.bn[bi].running_var.copy_from_slice(data);
                    }
                }
            }
        }
    }
    Ok((net, sidecar.bounds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::student::{ArchSpec, BlockSpec};

    fn arch() -> ArchSpec {
        ArchSpec {
            input_size: 8,
            input_ch: 2,
            blocks: vec![BlockSpec { out_ch: 4, pool_after: true }],
            fc_hidden: 5,
            outputs: 3,
        }
    }

    #[test]
    fn weights_roundtrip_at_f32_precision() {
        let net = StudentNet::<f64>::init(arch(), 33).unwrap();
        let dir = std::env::temp_dir().join("nser_weights_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("w.nsw");
        save_weights(&net, &NormalizationBounds::SIM, &path).unwrap();
        let (back, bounds) = load_weights(&path).unwrap();
        assert_eq!(bounds, NormalizationBounds::SIM);
        assert_eq!(back.arch, net.arch);
        for (a, b) in back.params().iter().zip(net.params()) {
            for (x, y) in a.iter().zip(b.iter()) {
                let (x, y) = (*x as f64, *y);
                assert!((x - y).abs() <= (y.abs() * 1e-6).max(1e-7), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn arch_mismatch_detected() {
        let net = StudentNet::<f64>::init(arch(), 33).unwrap();
        let dir = std::env::temp_dir().join("nser_weights_test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("w.nsw");
        save_weights(&net, &NormalizationBounds::SIM, &path).unwrap();
        // Corrupt the sidecar architecture.
        let sc = sidecar_path(&path);
        let text = std::fs::read_to_string(&sc).unwrap().replace("\"out_ch\": 4", "\"out_ch\": 6");
        std::fs::write(&sc, text).unwrap();
        assert!(matches!(load_weights(&path), Err(StudentError::ArchMismatch(_))));
    }

    #[test]
    fn truncated_file_rejected() {
        let net = StudentNet::<f64>::init(arch(), 33).unwrap();
        let dir = std::env::temp_dir().join("nser_weights_test3");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("w.nsw");
        save_weights(&net, &NormalizationBounds::SIM, &path).unwrap();
        let raw = std::fs::read(&path).unwrap();
        std::fs::write(&path, &raw[..raw.len() / 2]).unwrap();
        assert!(matches!(load_weights(&path), Err(StudentError::WeightFormat(_))));
    }
}
