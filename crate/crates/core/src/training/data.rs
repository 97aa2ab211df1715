use std::path::{Path, PathBuf};

use super::{DataConfig, Dataset, Result, TrainError};
use crate::midi::{read_token_file, window_dataset, EventVocab};

/// `.bbtk` files directly inside `dir`, sorted by file name.
pub fn token_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| TrainError::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bbtk"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn read_tokens(path: &Path) -> Result<Vec<usize>> {
    let bytes = std::fs::read(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
    read_token_file(&bytes, &EventVocab).map_err(|e| TrainError::Data(format!("{}: {e}", path.display())))
}

/// Loads every token file and holds out the last `val_fraction` of them
/// (at least one when the fraction is positive and two or more files exist).
pub fn load_dataset(cfg: &DataConfig) -> Result<Dataset> {
    let files = token_files(&cfg.tokens)?;
    if files.is_empty() {
        return Err(TrainError::Data(format!("no .bbtk files in {}", cfg.tokens.display())));
    }
    let seqs = files.iter().map(|p| read_tokens(p)).collect::<Result<Vec<_>>>()?;
    let mut n_val = (seqs.len() as f64 * cfg.val_fraction).round() as usize;
    if cfg.val_fraction > 0.0 && seqs.len() >= 2 {
        n_val = n_val.clamp(1, seqs.len() - 1);
    }
    let (train, val) = seqs.split_at(seqs.len() - n_val);
    let stride = cfg.stride.unwrap_or(cfg.window_len);
    Ok(Dataset {
        train: window_dataset(train, cfg.window_len, stride, &EventVocab),
        val: window_dataset(val, cfg.window_len, stride, &EventVocab),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::write_token_file;

    #[test]
    fn splits_by_sorted_name() {
        let dir = tempfile::tempdir().unwrap();
        for (name, len) in [("b", 10), ("a", 30), ("c", 5)] {
            let tokens: Vec<usize> = (0..len).map(|i| i % 100).collect();
            std::fs::write(dir.path().join(format!("{name}.bbtk")), write_token_file(&tokens, &EventVocab).unwrap()).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let data = load_dataset(&DataConfig {
            tokens: dir.path().to_path_buf(),
            val_fraction: 0.2,
            window_len: 8,
            stride: None,
        })
        .unwrap();
        // a (30 tokens) and b (10) train, c (5) validates
        assert_eq!(data.train.len(), 4 + 2);
        assert_eq!(data.val.len(), 1);
        assert_eq!(data.val[0][5], EventVocab.pad());
    }
}
