use super::{EventVocab, MidiError, Result};

pub const TOKEN_FILE_MAGIC: &[u8; 4] = b"BBTK";
pub const TOKEN_FILE_VERSION: u16 = 1;

/// Cuts each sequence into windows of `len` tokens starting every `stride`
/// tokens. The last window of a sequence is right-padded with PAD.
pub fn window_dataset(seqs: &[Vec<usize>], len: usize, stride: usize, vocab: &EventVocab) -> Vec<Vec<usize>> {
    assert!(len >= 2, "window length must be at least 2");
    assert!(stride >= 1, "stride must be positive");
    let mut out = Vec::new();
    for seq in seqs {
        let mut start = 0;
        while start < seq.len() {
            let end = (start + len).min(seq.len());
            let mut w = seq[start..end].to_vec();
            w.resize(len, vocab.pad());
            out.push(w);
            if end == seq.len() {
                break;
            }
            start += stride;
        }
    }
    out
}

/// `BBTK`, version and vocab size (u16 LE each), then u16 LE tokens.
pub fn write_token_file(tokens: &[usize], vocab: &EventVocab) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + 2 * tokens.len());
    out.extend_from_slice(TOKEN_FILE_MAGIC);
    out.extend_from_slice(&TOKEN_FILE_VERSION.to_le_bytes());
    out.extend_from_slice(&(vocab.size() as u16).to_le_bytes());
    for &t in tokens {
        if t >= vocab.size() {
            return Err(MidiError::Vocabulary {
                token: t,
                vocab_size: vocab.size(),
            });
        }
        out.extend_from_slice(&(t as u16).to_le_bytes());
    }
    Ok(out)
}

pub fn read_token_file(bytes: &[u8], vocab: &EventVocab) -> Result<Vec<usize>> {
    if bytes.len() < 8 || &bytes[..4] != TOKEN_FILE_MAGIC {
        return Err(MidiError::TokenFile("missing BBTK header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != TOKEN_FILE_VERSION {
        return Err(MidiError::TokenFile(format!("unsupported version {version}")));
    }
    let size = usize::from(u16::from_le_bytes([bytes[6], bytes[7]]));
    if size != vocab.size() {
        return Err(MidiError::TokenFile(format!(
            "vocabulary size {size} does not match {}",
            vocab.size()
        )));
    }
    let body = &bytes[8..];
    if body.len() % 2 != 0 {
        return Err(MidiError::TokenFile("odd payload length".into()));
    }
    body.chunks_exact(2)
        .map(|c| {
            let t = usize::from(u16::from_le_bytes([c[0], c[1]]));
            if t < size {
                Ok(t)
            } else {
                Err(MidiError::Vocabulary { token: t, vocab_size: size })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_multiple_gives_full_windows() {
        let seq: Vec<usize> = (0..2048).map(|i| i % 300).collect();
        let w = window_dataset(&[seq], 1024, 1024, &EventVocab);
        assert_eq!(w.len(), 2);
        assert!(w.iter().all(|w| !w.contains(&388)));
    }

    #[test]
    fn short_sequence_is_padded() {
        let w = window_dataset(&[vec![1; 1000]], 1024, 1024, &EventVocab);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].iter().filter(|&&t| t == 388).count(), 24);
    }

    #[test]
    fn token_file_header_layout() {
        let bytes = write_token_file(&[389, 60, 1], &EventVocab).unwrap();
        assert_eq!(&bytes[..8], b"BBTK\x01\x00\x86\x01");
        assert_eq!(read_token_file(&bytes, &EventVocab).unwrap(), vec![389, 60, 1]);
        assert!(read_token_file(b"MThd\x00\x00\x00\x00", &EventVocab).is_err());
    }

    proptest! {
        #[test]
        fn stride_equal_to_length_partitions_tokens(
            lens in prop::collection::vec(1usize..300, 1..6),
            len in 2usize..64,
        ) {
            let seqs: Vec<Vec<usize>> = lens.iter().map(|&n| vec![7; n]).collect();
            let windows = window_dataset(&seqs, len, len, &EventVocab);
            let kept: usize = windows.iter().map(|w| w.iter().filter(|&&t| t != 388).count()).sum();
            prop_assert_eq!(kept, lens.iter().sum::<usize>());
            prop_assert!(windows.iter().all(|w| w.len() == len));
        }

        #[test]
        fn token_files_round_trip(tokens in prop::collection::vec(0usize..390, 0..200)) {
            let bytes = write_token_file(&tokens, &EventVocab).unwrap();
            prop_assert_eq!(read_token_file(&bytes, &EventVocab).unwrap(), tokens);
        }
    }
}
