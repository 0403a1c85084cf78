use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Axis-aligned pixel box: top-left corner plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::InvalidArgument(format!(
                "bounding box extent must be positive, got w={w} h={h}"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    /// `(x1, y1, x2, y2)` with the far corner at `x + w`, `y + h`.
    pub fn corners(&self) -> (u64, u64, u64, u64) {
        let (x, y) = (u64::from(self.x), u64::from(self.y));
        (x, y, x + u64::from(self.w), y + u64::from(self.h))
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }
}

impl TryFrom<[u32; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [u32; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    Hi,
    Bn,
    Ml,
}

impl Lang {
    pub const ALL: [Lang; 3] = [Lang::Hi, Lang::Bn, Lang::Ml];

    pub fn code(self) -> &'static str {
        match self {
            Lang::Hi => "hi",
            Lang::Bn => "bn",
            Lang::Ml => "ml",
        }
    }

    /// Name used inside prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            Lang::Hi => "Hindi",
            Lang::Bn => "Bengali",
            Lang::Ml => "Malayalam",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Lang {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Lang::ALL
            .into_iter()
            .find(|l| l.code() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown language `{s}` (expected hi, bn or ml)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
    Challenge,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Valid, Split::Test, Split::Challenge];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::Challenge => "challenge",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown split `{s}`")))
    }
}

/// One row of a Visual Genome translation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VgRecord {
    /// `{lang}.{split}.{line}`, stable across runs.
    pub id: String,
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub english: String,
    pub target_lang: Lang,
    pub target_text: String,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// Abort on the first malformed line.
    Strict,
    /// Skip malformed lines and report them.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineIssue {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedTsv {
    pub records: Vec<VgRecord>,
    pub skipped: Vec<LineIssue>,
}

pub fn parse_vg_tsv(path: &Path, lang: Lang, split: Split, mode: ParseMode) -> Result<ParsedTsv> {
    let text = crate::io::read_to_string(path)?;
    parse_vg_str(&text, lang, split, mode).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

/// Parses TSV text with fields `image_id, x, y, w, h, english, target`.
/// Line numbers are 1-based; blank lines are ignored.
pub fn parse_vg_str(text: &str, lang: Lang, split: Split, mode: ParseMode) -> Result<ParsedTsv> {
    let mut out = ParsedTsv::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        match parse_line(raw, line, lang, split) {
            Ok(r) => out.records.push(r),
            Err(message) => match mode {
                ParseMode::Strict => {
                    return Err(Error::Parse {
                        path: "<input>".into(),
                        line,
                        message,
                    })
                }
                ParseMode::Lenient => out.skipped.push(LineIssue { line, message }),
            },
        }
    }
    Ok(out)
}

fn parse_line(raw: &str, line: usize, lang: Lang, split: Split) -> std::result::Result<VgRecord, String> {
    let fields: Vec<&str> = raw.split('\t').collect();
    if fields.len() != 7 {
        return Err(format!("expected 7 tab-separated fields, found {}", fields.len()));
    }
    let num = |name: &str, s: &str| -> std::result::Result<u32, String> {
        s.trim()
            .parse::<u32>()
            .map_err(|_| format!("field `{name}` is not a non-negative integer: {s:?}"))
    };
    let (x, y) = (num("x", fields[1])?, num("y", fields[2])?);
    let (w, h) = (num("w", fields[3])?, num("h", fields[4])?);
    let bbox = BoundingBox::new(x, y, w, h).map_err(|e| e.to_string())?;
    let image_id = fields[0].trim().to_string();
    let english: String = fields[5].trim().nfc().collect();
    let target_text: String = fields[6].trim().nfc().collect();
    for (name, v) in [("image_id", &image_id), ("english", &english), ("target", &target_text)] {
        if v.is_empty() {
            return Err(format!("field `{name}` is empty"));
        }
    }
    Ok(VgRecord {
        id: format!("{lang}.{split}.{line}"),
        image_id,
        bbox,
        english,
        target_lang: lang,
        target_text,
        split,
    })
}
