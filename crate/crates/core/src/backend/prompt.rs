use std::fs;
use std::io;
use std::path::Path;

use crate::domain::SceneLayout;

const STAGE1: &str = include_str!("../../prompts/stage1.txt");
const STAGE2: &str = include_str!("../../prompts/stage2.txt");
const STAGE3: &str = include_str!("../../prompts/stage3.txt");
const SCENE_HINT: &str = include_str!("../../prompts/scene_hint.txt");

/// Appended to a prompt when the first answer could not be parsed.
pub const REASK_SUFFIX: &str =
    "\nYour previous answer could not be parsed. Reply with the JSON object only, no other text.";

/// Editable prompt text. Placeholders: `{scene_hint}` (stage 1),
/// `{scene_layout}` (scene hint), `{t_base}` (stage 2).
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    pub stage1: String,
    pub stage2: String,
    pub stage3: String,
    pub scene_hint: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            stage1: STAGE1.into(),
            stage2: STAGE2.into(),
            stage3: STAGE3.into(),
            scene_hint: SCENE_HINT.into(),
        }
    }
}

impl PromptTemplates {
    /// Loads `stage1.txt`, `stage2.txt`, `stage3.txt`, `scene_hint.txt` from
    /// `dir`, keeping the built-in text for any file that is absent.
    pub fn from_dir(dir: &Path) -> io::Result<Self> {
        let mut t = Self::default();
        for (name, slot) in [
            ("stage1.txt", &mut t.stage1),
            ("stage2.txt", &mut t.stage2),
            ("stage3.txt", &mut t.stage3),
            ("scene_hint.txt", &mut t.scene_hint),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = fs::read_to_string(path)?;
            }
        }
        Ok(t)
    }

    pub fn stage1(&self, layout: Option<&SceneLayout>) -> String {
        let hint = layout
            .map(|l| self.scene_hint.replace("{scene_layout}", l.tag()))
            .unwrap_or_default();
        self.stage1.replace("{scene_hint}", hint.trim_end())
    }

    pub fn stage2(&self, t_base: f64) -> String {
        self.stage2.replace("{t_base}", &format!("{t_base:.2}"))
    }

    pub fn stage3(&self) -> String {
        self.stage3.clone()
    }
}

/// Joint time/point/type prompt; `layout` enables the scene hint.
pub fn build_stage1_prompt(layout: Option<&SceneLayout>) -> String {
    PromptTemplates::default().stage1(layout)
}

pub fn build_stage2_prompt(t_base: f64) -> String {
    PromptTemplates::default().stage2(t_base)
}

pub fn build_stage3_prompt() -> String {
    PromptTemplates::default().stage3()
}
