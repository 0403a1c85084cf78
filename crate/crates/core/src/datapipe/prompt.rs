use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vg::{Lang, VgRecord};
use crate::error::{Error, Result};

pub const MMT_TEMPLATE: &str = "You are given an image and coordinates of a bounding box as: x1={x1}, y1={y1}, x2={x2}, y2={y2}. Using the context of the objects or items available in the bounding box translate the following sentence from English into {lang} language.{labels_clause} English sentence is: {sentence}.";

/// Written with explicit source and target so reversed instances reuse it;
/// with `src = English` it is the forward text-only template.
pub const TEXT_ONLY_TEMPLATE: &str =
    "Translate the following sentence from {src} into {tgt} language. {src} sentence is: {sentence}.";

pub const CAPTION_TEMPLATE: &str = "You are given an image and coordinates of a bounding box as: x1={x1}, y1={y1}, x2={x2}, y2={y2}.{labels_clause} Provide a short caption of the object in {lang} language.";

/// Inserted only when a record has an object tag.
pub const LABELS_CLAUSE: &str = " You are also provided labels of the objects in the image as: {labels}.";

pub const ENGLISH: &str = "English";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Mmt,
    TextOnly,
    Caption,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mmt" => Ok(Task::Mmt),
            "text_only" => Ok(Task::TextOnly),
            "caption" => Ok(Task::Caption),
            _ => Err(Error::InvalidArgument(format!(
                "unknown task `{s}` (expected mmt, text_only or caption)"
            ))),
        }
    }
}

/// One rendered instruction-tuning sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub task: Task,
    pub prompt: String,
    pub response: String,
    pub lang: Lang,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub image_id: Option<String>,
    pub source_id: String,
    /// Source-side sentence of the translation direction.
    pub source: String,
    /// True when the direction is `lang` into English.
    #[serde(skip_serializing_if = "is_false", default)]
    pub reverse: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Substitutes every `{name}` in `template`. A placeholder without a value is an error.
pub fn fill_template(template: &str, vars: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::UnfilledPlaceholder(after.to_string()))?;
        let key = &after[..close];
        let value = vars
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::UnfilledPlaceholder(key.to_string()))?;
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn labels_clause(tag: Option<&str>) -> Result<String> {
    match tag {
        Some(t) => fill_template(LABELS_CLAUSE, &[("labels", t)]),
        None => Ok(String::new()),
    }
}

fn text_only_prompt(src: &str, tgt: &str, sentence: &str) -> Result<String> {
    fill_template(TEXT_ONLY_TEMPLATE, &[("src", src), ("tgt", tgt), ("sentence", sentence)])
}

/// Forward text-only prompt for an English sentence.
pub fn render_text_only(lang: Lang, sentence: &str) -> Result<String> {
    text_only_prompt(ENGLISH, lang.display_name(), sentence)
}

/// Renders `record` for `task`. `tag` fills the labels sentence, which is
/// omitted when absent; text-only prompts never mention labels.
pub fn render_prompt(record: &VgRecord, task: Task, tag: Option<&str>) -> Result<PromptInstance> {
    let lang = record.target_lang.display_name();
    let (x1, y1, x2, y2) = record.bbox.corners();
    let mut corners = [String::new(), String::new(), String::new(), String::new()];
    for (s, v) in corners.iter_mut().zip([x1, y1, x2, y2]) {
        write!(s, "{v}").expect("write to String");
    }
    let clause = labels_clause(tag)?;
    let box_vars: Vec<(&str, &str)> = vec![
        ("x1", &corners[0]),
        ("y1", &corners[1]),
        ("x2", &corners[2]),
        ("y2", &corners[3]),
        ("lang", lang),
        ("labels_clause", &clause),
    ];
    let (prompt, image_id) = match task {
        Task::Mmt => (
            fill_template(MMT_TEMPLATE, &[box_vars.as_slice(), &[("sentence", &record.english)]].concat())?,
            Some(record.image_id.clone()),
        ),
        Task::TextOnly => (text_only_prompt(ENGLISH, lang, &record.english)?, None),
        Task::Caption => (fill_template(CAPTION_TEMPLATE, &box_vars)?, Some(record.image_id.clone())),
    };
    Ok(PromptInstance {
        task,
        prompt,
        response: record.target_text.clone(),
        lang: record.target_lang,
        image_id,
        source_id: record.id.clone(),
        source: record.english.clone(),
        reverse: false,
    })
}

/// The same pair in the opposite direction, rendered as a text-only task.
/// Applying it twice yields the forward text-only instance of the pair.
pub fn reverse_instance(inst: &PromptInstance) -> Result<PromptInstance> {
    let lang = inst.lang.display_name();
    let reverse = !inst.reverse;
    let (src, tgt) = if reverse { (lang, ENGLISH) } else { (ENGLISH, lang) };
    Ok(PromptInstance {
        task: Task::TextOnly,
        prompt: text_only_prompt(src, tgt, &inst.response)?,
        response: inst.source.clone(),
        lang: inst.lang,
        image_id: None,
        source_id: inst.source_id.clone(),
        source: inst.response.clone(),
        reverse,
    })
}

/// Originals followed by one reversed copy of each translation instance.
/// Caption instances have no source sentence and are kept but not reversed.
pub fn back_translation_augment(instances: &[PromptInstance]) -> Result<Vec<PromptInstance>> {
    let mut out = instances.to_vec();
    for inst in instances {
        if inst.task != Task::Caption {
            out.push(reverse_instance(inst)?);
        }
    }
    Ok(out)
}

pub fn instances_to_jsonl(instances: &[PromptInstance]) -> Result<String> {
    let mut out = String::new();
    for inst in instances {
        out.push_str(&serde_json::to_string(inst)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_instances(text: &str, path: &Path) -> Result<Vec<PromptInstance>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_instances(path: &Path, instances: &[PromptInstance]) -> Result<()> {
    crate::io::write_atomic(path, instances_to_jsonl(instances)?.as_bytes())
}

pub fn read_instances(path: &Path) -> Result<Vec<PromptInstance>> {
    parse_instances(&crate::io::read_to_string(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::vg::{BoundingBox, Split};

    fn record() -> VgRecord {
        VgRecord {
            id: "hi.test.1".into(),
            image_id: "42".into(),
            bbox: BoundingBox::new(5, 10, 20, 30).unwrap(),
            english: "a cat".into(),
            target_lang: Lang::Hi,
            target_text: "एक बिल्ली".into(),
            split: Split::Test,
        }
    }

    #[test]
    fn text_only_example() {
        let p = render_prompt(&record(), Task::TextOnly, Some("cat")).unwrap();
        assert_eq!(
            p.prompt,
            "Translate the following sentence from English into Hindi language. English sentence is: a cat."
        );
        assert_eq!(p.image_id, None);
        assert_eq!(p.response, "एक बिल्ली");
    }

    #[test]
    fn corners_use_extent() {
        let p = render_prompt(&record(), Task::Mmt, None).unwrap();
        assert!(p.prompt.contains("x1=5, y1=10, x2=25, y2=40"), "{}", p.prompt);
        assert!(!p.prompt.contains("labels"));
    }

    #[test]
    fn caption_has_no_sentence() {
        let p = render_prompt(&record(), Task::Caption, Some("cat")).unwrap();
        assert!(!p.prompt.contains("English sentence"));
        assert!(!p.prompt.contains("a cat"));
    }

    #[test]
    fn unfilled_placeholder_errors() {
        assert!(matches!(
            fill_template("a {b} c", &[("x", "y")]),
            Err(Error::UnfilledPlaceholder(k)) if k == "b"
        ));
        assert!(matches!(fill_template("a {b", &[]), Err(Error::UnfilledPlaceholder(_))));
        assert_eq!(fill_template("{a}{a}-{b}", &[("a", "1"), ("b", "{2}")]).unwrap(), "11-{2}");
    }

    #[test]
    fn back_translation() {
        let fwd = render_prompt(&record(), Task::Mmt, Some("cat")).unwrap();
        let aug = back_translation_augment(std::slice::from_ref(&fwd)).unwrap();
        assert_eq!(aug.len(), 2);
        assert_eq!(aug[0], fwd);
        let rev = &aug[1];
        assert_eq!(rev.response, "a cat");
        assert_eq!(
            rev.prompt,
            "Translate the following sentence from Hindi into English language. Hindi sentence is: एक बिल्ली."
        );
        let text = render_prompt(&record(), Task::TextOnly, None).unwrap();
        assert_eq!(reverse_instance(&reverse_instance(&text).unwrap()).unwrap(), text);
    }
}
