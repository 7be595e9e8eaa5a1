//! MAPS-ORACLE/1: newline-delimited JSON over a byte stream.
//!
//! ```text
//! -> {"hello":{"version":1}}
//! <- {"ready":{"class_count":K,"max_batch":B,"id":"..."}}
//! -> {"batch":{"seq":n,"width":w,"height":h,"pixels_b64":"...","count":m}}
//! <- {"logits":{"seq":n,"values":[[z_1..z_K], ...]}}
//! <- {"error":{"seq":n,"message":"..."}}
//! ```
//!
//! Pixels are 8-bit RGB, row-major, images concatenated in batch order.

use std::io::{self, BufRead, Write};

use base64::Engine;
use base64::engine::general_purpose::STANDARD as B64;
use serde::{Deserialize, Serialize};

pub const VERSION: u32 = 1;
pub const DEFAULT_MAX_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Message {
    Hello {
        version: u32,
    },
    Ready {
        class_count: usize,
        max_batch: usize,
        id: String,
    },
    Batch {
        seq: u64,
        width: usize,
        height: usize,
        pixels_b64: String,
        count: usize,
    },
    Logits {
        seq: u64,
        values: Vec<Vec<f64>>,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
        message: String,
    },
}

impl Message {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("messages always serialize");
        s.push('\n');
        s
    }

    pub fn parse(line: &str) -> Result<Message, serde_json::Error> {
        serde_json::from_str(line.trim_end())
    }

    /// Builds a batch from concatenated RGB bytes.
    pub fn batch(seq: u64, width: usize, height: usize, pixels: &[u8], count: usize) -> Message {
        Message::Batch {
            seq,
            width,
            height,
            pixels_b64: B64.encode(pixels),
            count,
        }
    }
}

/// Decodes a batch payload and checks its length against `w·h·3·count`.
pub fn decode_pixels(width: usize, height: usize, pixels_b64: &str, count: usize) -> Result<Vec<u8>, String> {
    let bytes = B64.decode(pixels_b64).map_err(|e| format!("bad base64: {e}"))?;
    let want = width * height * 3 * count;
    if bytes.len() != want {
        return Err(format!("payload has {} bytes, expected {want}", bytes.len()));
    }
    Ok(bytes)
}

/// Server-side model: one logit row per image.
pub trait Model {
    fn class_count(&self) -> usize;
    fn id(&self) -> String;
    fn evaluate(&mut self, width: usize, height: usize, images: &[&[u8]]) -> Result<Vec<Vec<f64>>, String>;
}

/// Arithmetic stub: `z_k` is the mean of the bytes at positions `i ≡ k (mod K)`,
/// divided by 255. With `K = 3` this is the per-channel mean intensity.
pub fn stub_logits(pixels: &[u8], k: usize) -> Vec<f64> {
    let mut sum = vec![0u64; k];
    let mut n = vec![0u64; k];
    for (i, &b) in pixels.iter().enumerate() {
        sum[i % k] += b as u64;
        n[i % k] += 1;
    }
    sum.iter().zip(&n).map(|(&s, &c)| if c == 0 { 0.0 } else { s as f64 / c as f64 / 255.0 }).collect()
}

#[derive(Debug, Clone)]
pub struct StubModel {
    pub classes: usize,
}

impl Model for StubModel {
    fn class_count(&self) -> usize {
        self.classes
    }

    fn id(&self) -> String {
        format!("stub/mean-intensity k={}", self.classes)
    }

    fn evaluate(&mut self, _w: usize, _h: usize, images: &[&[u8]]) -> Result<Vec<Vec<f64>>, String> {
        Ok(images.iter().map(|img| stub_logits(img, self.classes)).collect())
    }
}

/// Serves one connection until EOF. A bad handshake gets an error reply and
/// closes the connection; per-batch failures are answered with the batch seq
/// and the server keeps going.
pub fn serve(model: &mut dyn Model, max_batch: usize, reader: impl BufRead, mut writer: impl Write) -> io::Result<()> {
    let mut lines = reader.lines();
    let send = |w: &mut dyn Write, m: Message| -> io::Result<()> {
        w.write_all(m.to_line().as_bytes())?;
        w.flush()
    };
    let Some(first) = lines.next().transpose()? else {
        return Ok(());
    };
    match Message::parse(&first) {
        Ok(Message::Hello { version: VERSION }) => {}
        Ok(Message::Hello { version }) => {
            return send(&mut writer, Message::Error { seq: None, message: format!("unsupported version {version}") });
        }
        _ => return send(&mut writer, Message::Error { seq: None, message: "expected hello".into() }),
    }
    send(
        &mut writer,
        Message::Ready {
            class_count: model.class_count(),
            max_batch,
            id: model.id(),
        },
    )?;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match Message::parse(&line) {
            Ok(Message::Batch { seq, width, height, pixels_b64, count }) => {
                let result = if count > max_batch {
                    Err(format!("batch of {count} exceeds max_batch {max_batch}"))
                } else {
                    decode_pixels(width, height, &pixels_b64, count).and_then(|px| {
                        let stride = width * height * 3;
                        let images: Vec<&[u8]> = (0..count).map(|i| &px[i * stride..(i + 1) * stride]).collect();
                        model.evaluate(width, height, &images)
                    })
                };
                match result {
                    Ok(values) => Message::Logits { seq, values },
                    Err(message) => Message::Error { seq: Some(seq), message },
                }
            }
            Ok(other) => Message::Error { seq: None, message: format!("unexpected message {other:?}") },
            Err(e) => Message::Error { seq: None, message: format!("malformed request: {e}") },
        };
        send(&mut writer, reply)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn messages_use_external_tags() {
        assert_eq!(Message::Hello { version: 1 }.to_line(), "{\"hello\":{\"version\":1}}\n");
        let m = Message::parse(r#"{"logits":{"seq":3,"values":[[0.5,-1.0]]}}"#).unwrap();
        assert_eq!(m, Message::Logits { seq: 3, values: vec![vec![0.5, -1.0]] });
        let e = Message::parse(r#"{"error":{"message":"boom"}}"#).unwrap();
        assert_eq!(e, Message::Error { seq: None, message: "boom".into() });
    }

    #[test]
    fn stub_of_black_image_is_zero() {
        assert_eq!(stub_logits(&[0; 12], 3), vec![0.0; 3]);
        assert_eq!(stub_logits(&[255, 0, 51, 255, 0, 51], 3), vec![1.0, 0.0, 0.2]);
    }

    #[test]
    fn serve_rejects_wrong_version_and_closes() {
        let input = "{\"hello\":{\"version\":2}}\n{\"batch\":{\"seq\":0,\"width\":1,\"height\":1,\"pixels_b64\":\"AAAA\",\"count\":1}}\n";
        let mut out = Vec::new();
        serve(&mut StubModel { classes: 3 }, 8, input.as_bytes(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(matches!(Message::parse(&text).unwrap(), Message::Error { seq: None, .. }));
    }

    #[test]
    fn serve_answers_batches_and_survives_bad_ones() {
        let mut input = Message::Hello { version: 1 }.to_line();
        input += &Message::batch(0, 1, 1, &[255, 0, 0], 1).to_line();
        input += "{\"batch\":{\"seq\":1,\"width\":2,\"height\":2,\"pixels_b64\":\"AAAA\",\"count\":1}}\n";
        input += &Message::batch(2, 1, 1, &[0, 0, 0, 0, 255, 0], 2).to_line();
        let mut out = Vec::new();
        serve(&mut StubModel { classes: 3 }, 8, input.as_bytes(), &mut out).unwrap();
        let replies: Vec<Message> = String::from_utf8(out).unwrap().lines().map(|l| Message::parse(l).unwrap()).collect();
        assert!(matches!(replies[0], Message::Ready { class_count: 3, max_batch: 8, .. }));
        assert_eq!(replies[1], Message::Logits { seq: 0, values: vec![vec![1.0, 0.0, 0.0]] });
        assert!(matches!(replies[2], Message::Error { seq: Some(1), .. }));
        assert_eq!(
            replies[3],
            Message::Logits {
                seq: 2,
                values: vec![vec![0.0; 3], vec![0.0, 1.0, 0.0]]
            }
        );
    }
}
