//! Small synthetic stand-ins for the Visual Genome translation files and
//! detector outputs, built from a fixed bilingual lexicon.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::iou::DetectedObject;
use super::vg::{BoundingBox, Lang, Split};

const NOUNS: [(&str, [&str; 3]); 10] = [
    ("man", ["आदमी", "লোক", "മനുഷ്യൻ"]),
    ("woman", ["औरत", "মহিলা", "സ്ത്രീ"]),
    ("dog", ["कुत्ता", "কুকুর", "നായ"]),
    ("cat", ["बिल्ली", "বিড়াল", "പൂച്ച"]),
    ("tree", ["पेड़", "গাছ", "മരം"]),
    ("car", ["गाड़ी", "গাড়ি", "കാർ"]),
    ("boat", ["नाव", "নৌকা", "വള്ളം"]),
    ("house", ["घर", "বাড়ি", "വീട്"]),
    ("bird", ["चिड़िया", "পাখি", "പക്ഷി"]),
    ("horse", ["घोड़ा", "ঘোড়া", "കുതിര"]),
];

const ADJECTIVES: [(&str, [&str; 3]); 6] = [
    ("red", ["लाल", "লাল", "ചുവന്ന"]),
    ("blue", ["नीला", "নীল", "നീല"]),
    ("big", ["बड़ा", "বড়", "വലിയ"]),
    ("small", ["छोटा", "ছোট", "ചെറിയ"]),
    ("white", ["सफ़ेद", "সাদা", "വെളുത്ത"]),
    ("black", ["काला", "কালো", "കറുത്ത"]),
];

/// Size of the pixel canvas boxes are placed on.
pub const CANVAS: u32 = 100;

fn lang_index(lang: Lang) -> usize {
    match lang {
        Lang::Hi => 0,
        Lang::Bn => 1,
        Lang::Ml => 2,
    }
}

/// One synthetic image region, shared by all languages.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRegion {
    pub image_id: String,
    pub bbox: BoundingBox,
    noun: usize,
    adjective: usize,
}

impl SynthRegion {
    pub fn english(&self) -> String {
        format!("{} {}", ADJECTIVES[self.adjective].0, NOUNS[self.noun].0)
    }

    pub fn target(&self, lang: Lang) -> String {
        let i = lang_index(lang);
        format!("{} {}", ADJECTIVES[self.adjective].1[i], NOUNS[self.noun].1[i])
    }

    pub fn label(&self) -> &'static str {
        NOUNS[self.noun].0
    }
}

fn split_offset(split: Split) -> u64 {
    match split {
        Split::Train => 100_000,
        Split::Valid => 200_000,
        Split::Test => 300_000,
        Split::Challenge => 400_000,
    }
}

fn random_box(rng: &mut ChaCha8Rng) -> BoundingBox {
    let w = rng.random_range(10..=50);
    let h = rng.random_range(10..=50);
    let x = rng.random_range(0..=CANVAS - w);
    let y = rng.random_range(0..=CANVAS - h);
    BoundingBox { x, y, w, h }
}

/// `n` regions for `split`; the same seed and split give the same regions.
pub fn synth_regions(split: Split, n: usize, seed: u64) -> Vec<SynthRegion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ split_offset(split));
    (0..n)
        .map(|i| SynthRegion {
            image_id: (split_offset(split) + i as u64).to_string(),
            bbox: random_box(&mut rng),
            noun: rng.random_range(0..NOUNS.len()),
            adjective: rng.random_range(0..ADJECTIVES.len()),
        })
        .collect()
}

/// TSV text in the Visual Genome layout for `lang`.
pub fn synth_tsv(regions: &[SynthRegion], lang: Lang) -> String {
    let mut out = String::new();
    for r in regions {
        let b = r.bbox;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.image_id,
            b.x,
            b.y,
            b.w,
            b.h,
            r.english(),
            r.target(lang)
        ));
    }
    out
}

/// Detector output per image: the region's object slightly displaced, plus
/// one distractor elsewhere on the canvas.
pub fn synth_detections(regions: &[SynthRegion], seed: u64) -> BTreeMap<String, Vec<DetectedObject>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    regions
        .iter()
        .map(|r| {
            let b = r.bbox;
            let jitter = |v: u32, rng: &mut ChaCha8Rng| v.saturating_sub(rng.random_range(0..3));
            let near = BoundingBox {
                x: jitter(b.x, &mut rng),
                y: jitter(b.y, &mut rng),
                w: b.w,
                h: b.h,
            };
            let other = NOUNS[(r.noun + 1 + rng.random_range(0..NOUNS.len() - 1)) % NOUNS.len()].0;
            let dets = vec![
                DetectedObject {
                    label: other.to_string(),
                    bbox: random_box(&mut rng),
                    confidence: f64::from(rng.random_range(30..90u32)) / 100.0,
                },
                DetectedObject {
                    label: r.label().to_string(),
                    bbox: near,
                    confidence: f64::from(rng.random_range(50..100u32)) / 100.0,
                },
            ];
            (r.image_id.clone(), dets)
        })
        .collect()
}
