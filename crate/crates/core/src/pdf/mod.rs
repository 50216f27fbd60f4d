//! Minimal PDF support.
//!
//! The writer emits single-page vector documents from a [`Scene`]. The reader
//! understands the subset of PDF found in ECG exports and scans: path
//! construction and painting, graphics state, form XObjects and 8-bit image
//! XObjects (raw, Flate or DCT encoded). Text is not rendered; glyphs drawn
//! as paths are.

mod content;
mod object;
mod writer;

pub use object::{Document, Object, PdfError};
pub use writer::write_scene;

use crate::scene::Scene;

impl Document {
    /// Builds the vector scene of page `index`.
    pub fn page_scene(&self, index: usize) -> Result<Scene, PdfError> {
        let page = self.page(index)?;
        content::interpret_page(self, &page)
    }
}
