use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GenerationError;
use crate::item::NUM_OPTIONS;
use crate::jsonl::read_json;

pub const NUM_DEMONSTRATIONS: usize = 10;
pub const DEMO_DELIMITER: &str = "### Example ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub paragraph: String,
    pub question: String,
    pub options: Vec<String>,
    pub answer: String,
}

/// Instructions plus exactly ten worked demonstrations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub version: String,
    pub instructions: String,
    pub demonstrations: Vec<Demonstration>,
    #[serde(default = "default_questions")]
    pub questions_per_paragraph: usize,
    #[serde(default = "default_options")]
    pub options_per_question: usize,
}

fn default_questions() -> usize {
    10
}

fn default_options() -> usize {
    NUM_OPTIONS
}

impl PromptSpec {
    pub fn load(path: &Path) -> Result<Self, GenerationError> {
        let spec: PromptSpec = read_json(path).map_err(|e| GenerationError::PromptPack(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        let bad = |m: String| Err(GenerationError::PromptPack(m));
        if self.demonstrations.len() != NUM_DEMONSTRATIONS {
            return bad(format!("expected {NUM_DEMONSTRATIONS} demonstrations, found {}", self.demonstrations.len()));
        }
        if self.options_per_question != NUM_OPTIONS {
            return bad(format!("items carry exactly {NUM_OPTIONS} options, pack asks for {}", self.options_per_question));
        }
        if self.questions_per_paragraph == 0 {
            return bad("questions_per_paragraph must be positive".into());
        }
        for (i, d) in self.demonstrations.iter().enumerate() {
            if d.options.len() != NUM_OPTIONS || !d.options.contains(&d.answer) {
                return bad(format!("demonstration {} needs {NUM_OPTIONS} options including its answer", i + 1));
            }
        }
        Ok(())
    }
}

fn write_block(out: &mut String, question: &str, options: &[String], answer: Option<&str>) {
    let _ = writeln!(out, "Q: {question}");
    for (i, o) in options.iter().enumerate() {
        let _ = writeln!(out, "A{}: {o}", i + 1);
    }
    if let Some(a) = answer {
        let _ = writeln!(out, "Answer: {a}");
    }
}

/// Instructions, the ten demonstrations, the target paragraph, then the
/// output-format directive, in that order.
pub fn build_generation_prompt(spec: &PromptSpec, paragraph: &str) -> Result<String, GenerationError> {
    if paragraph.trim().is_empty() {
        return Err(GenerationError::EmptyParagraph);
    }
    let mut p = String::new();
    p.push_str(spec.instructions.trim());
    p.push_str("\n\n");
    for (i, d) in spec.demonstrations.iter().enumerate() {
        let _ = writeln!(p, "{DEMO_DELIMITER}{}", i + 1);
        let _ = writeln!(p, "Paragraph: {}", d.paragraph.trim());
        write_block(&mut p, &d.question, &d.options, Some(&d.answer));
        p.push('\n');
    }
    let _ = writeln!(p, "### Paragraph\n{}\n", paragraph.trim());
    let n = spec.questions_per_paragraph;
    let _ = writeln!(
        p,
        "### Output format\nWrite exactly {n} multiple-choice questions about the paragraph above. \
         Use one block per question:\nQ: <question>"
    );
    for i in 1..=spec.options_per_question {
        let _ = writeln!(p, "A{i}: <option>");
    }
    p.push_str(
        "Answer: <the correct option, copied exactly>\n\
         Separate blocks with a blank line. The correct option must appear word for word in the paragraph.\n",
    );
    Ok(p)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn spec(n_demos: usize) -> PromptSpec {
        let demo = |i: usize| Demonstration {
            paragraph: format!("Paragraph number {i} mentions Lake Sevan."),
            question: format!("Which lake is mentioned in paragraph {i}?"),
            options: vec!["Lake Sevan".into(), "Lake Van".into(), "Lake Baikal".into(), "Lake Como".into()],
            answer: "Lake Sevan".into(),
        };
        PromptSpec {
            version: "test".into(),
            instructions: "Write questions.".into(),
            demonstrations: (1..=n_demos).map(demo).collect(),
            questions_per_paragraph: 10,
            options_per_question: 4,
        }
    }

    #[test]
    fn prompt_has_ten_demos_in_order() {
        let s = spec(10);
        let p = build_generation_prompt(&s, "Target paragraph text.").unwrap();
        assert_eq!(p.matches(DEMO_DELIMITER).count(), 10);
        let i_instr = p.find("Write questions.").unwrap();
        let i_demo = p.find("### Example 1\n").unwrap();
        let i_last = p.find("### Example 10\n").unwrap();
        let i_para = p.find("Target paragraph text.").unwrap();
        let i_fmt = p.find("### Output format").unwrap();
        assert!(i_instr < i_demo && i_demo < i_last && i_last < i_para && i_para < i_fmt);
        assert!(p.contains("Write exactly 10 multiple-choice questions"));
    }

    #[test]
    fn empty_paragraph_rejected() {
        assert!(matches!(build_generation_prompt(&spec(10), " \n"), Err(GenerationError::EmptyParagraph)));
    }

    #[test]
    fn pack_validation() {
        assert!(spec(10).validate().is_ok());
        assert!(spec(9).validate().is_err());
        let mut s = spec(10);
        s.options_per_question = 5;
        assert!(s.validate().is_err());
        let mut s = spec(10);
        s.demonstrations[3].answer = "Lake Tahoe".into();
        assert!(s.validate().is_err());
    }
}
