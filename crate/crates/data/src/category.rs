//! The 12 per-event categorization fields and their value sets.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeOutline {
    Fragmented,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Texture {
    Rough,
    Smooth,
    Strong,
    Variable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Contrast {
    Strong,
    Weak,
    Variable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Sharp,
    Diffuse,
    Variable,
}

/// One label per oil event covering shape, texture, and contrast traits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryLabel {
    pub patch: bool,
    pub linear: bool,
    pub angular: bool,
    pub weathered: bool,
    pub tailed: bool,
    pub droplets: bool,
    pub winding: bool,
    pub feathered: bool,
    pub shape_outline: ShapeOutline,
    pub texture: Texture,
    pub contrast: Contrast,
    pub edge: Edge,
}

impl Default for CategoryLabel {
    fn default() -> Self {
        Self {
            patch: false,
            linear: false,
            angular: false,
            weathered: false,
            tailed: false,
            droplets: false,
            winding: false,
            feathered: false,
            shape_outline: ShapeOutline::Continuous,
            texture: Texture::Smooth,
            contrast: Contrast::Strong,
            edge: Edge::Sharp,
        }
    }
}

/// The 12 categories, each classified by its own network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    PatchShape,
    LinearShape,
    AngularShape,
    WeatheredTexture,
    TailedShape,
    DropletsTexture,
    WindingTexture,
    FeatheredTexture,
    ShapeOutline,
    Texture,
    Contrast,
    Edge,
}

pub const ALL_CATEGORIES: [Category; 12] = [
    Category::PatchShape,
    Category::LinearShape,
    Category::AngularShape,
    Category::WeatheredTexture,
    Category::TailedShape,
    Category::DropletsTexture,
    Category::WindingTexture,
    Category::FeatheredTexture,
    Category::ShapeOutline,
    Category::Texture,
    Category::Contrast,
    Category::Edge,
];

impl Category {
    pub fn value_count(self) -> usize {
        match self {
            Category::Texture => 4,
            Category::Contrast | Category::Edge => 3,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::PatchShape => "patch_shape",
            Category::LinearShape => "linear_shape",
            Category::AngularShape => "angular_shape",
            Category::WeatheredTexture => "weathered_texture",
            Category::TailedShape => "tailed_shape",
            Category::DropletsTexture => "droplets_texture",
            Category::WindingTexture => "winding_texture",
            Category::FeatheredTexture => "feathered_texture",
            Category::ShapeOutline => "shape_outline",
            Category::Texture => "texture",
            Category::Contrast => "contrast",
            Category::Edge => "edge",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        ALL_CATEGORIES.iter().copied().find(|c| c.name() == name)
    }

    /// Display names of this category's values, index order.
    pub fn value_names(self) -> &'static [&'static str] {
        match self {
            Category::ShapeOutline => &["fragmented", "continuous"],
            Category::Texture => &["rough", "smooth", "strong", "variable"],
            Category::Contrast => &["strong", "weak", "variable"],
            Category::Edge => &["sharp", "diffuse", "variable"],
            _ => &["false", "true"],
        }
    }
}

impl CategoryLabel {
    /// Class index of this label within `category`'s value set.
    pub fn value_index(&self, category: Category) -> usize {
        match category {
            Category::PatchShape => self.patch as usize,
            Category::LinearShape => self.linear as usize,
            Category::AngularShape => self.angular as usize,
            Category::WeatheredTexture => self.weathered as usize,
            Category::TailedShape => self.tailed as usize,
            Category::DropletsTexture => self.droplets as usize,
            Category::WindingTexture => self.winding as usize,
            Category::FeatheredTexture => self.feathered as usize,
            Category::ShapeOutline => self.shape_outline as usize,
            Category::Texture => self.texture as usize,
            Category::Contrast => self.contrast as usize,
            Category::Edge => self.edge as usize,
        }
    }

    pub fn set_value_index(&mut self, category: Category, idx: usize) {
        match category {
            Category::PatchShape => self.patch = idx != 0,
            Category::LinearShape => self.linear = idx != 0,
            Category::AngularShape => self.angular = idx != 0,
            Category::WeatheredTexture => self.weathered = idx != 0,
            Category::TailedShape => self.tailed = idx != 0,
            Category::DropletsTexture => self.droplets = idx != 0,
            Category::WindingTexture => self.winding = idx != 0,
            Category::FeatheredTexture => self.feathered = idx != 0,
            Category::ShapeOutline => {
                self.shape_outline = [ShapeOutline::Fragmented, ShapeOutline::Continuous][idx]
            }
            Category::Texture => {
                self.texture = [Texture::Rough, Texture::Smooth, Texture::Strong, Texture::Variable][idx]
            }
            Category::Contrast => {
                self.contrast = [Contrast::Strong, Contrast::Weak, Contrast::Variable][idx]
            }
            Category::Edge => self.edge = [Edge::Sharp, Edge::Diffuse, Edge::Variable][idx],
        }
    }
}
