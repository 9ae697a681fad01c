//! The annotation CSV: header `filename,class,x_min,y_min,x_max,y_max`,
//! one row per box, integer pixel coordinates with exclusive maxima.

use std::collections::HashMap;
use std::path::Path;

use signforge_core::{AnnotatedImage, BoundingBox};

use crate::error::{Error, Result};
use crate::imageio::read_png;

pub const CSV_HEADER: [&str; 6] = ["filename", "class", "x_min", "y_min", "x_max", "y_max"];

/// Annotations for one file; pixels are loaded on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageMeta {
    /// The CSV `filename`, relative to the image directory.
    pub image_id: String,
    pub boxes: Vec<BoundingBox>,
}

impl ImageMeta {
    /// Reads the pixels from `image_dir` and checks every box against the image size.
    pub fn load(&self, image_dir: &Path) -> Result<AnnotatedImage> {
        let img = read_png(&image_dir.join(&self.image_id))?;
        let out = AnnotatedImage::new(self.image_id.clone(), img, self.boxes.clone());
        out.validate()?;
        Ok(out)
    }
}

/// Groups rows by filename, in order of first appearance.
pub fn parse_annotations(path: &Path) -> Result<Vec<ImageMeta>> {
    let file = std::fs::File::open(path).map_err(Error::io(path))?;
    read_annotations(file, path)
}

pub fn read_annotations(reader: impl std::io::Read, path: &Path) -> Result<Vec<ImageMeta>> {
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        Error::parse(path, line, e.to_string())
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?;
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != CSV_HEADER {
        return Err(Error::parse(
            path,
            1,
            format!("header must be `{}`, found `{}`", CSV_HEADER.join(","), found.join(",")),
        ));
    }
    let mut out: Vec<ImageMeta> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let coord = |i: usize| {
            field(i).parse::<u32>().map_err(|_| {
                Error::parse(path, line, format!("{} `{}` is not a non-negative integer", CSV_HEADER[i], field(i)))
            })
        };
        let filename = field(0);
        if filename.is_empty() {
            return Err(Error::parse(path, line, "empty filename"));
        }
        let b = BoundingBox::new(field(1), coord(2)?, coord(3)?, coord(4)?, coord(5)?);
        b.validate(filename, u32::MAX, u32::MAX)?;
        let slot = *index.entry(filename.to_string()).or_insert_with(|| {
            out.push(ImageMeta { image_id: filename.to_string(), boxes: Vec::new() });
            out.len() - 1
        });
        out[slot].boxes.push(b);
    }
    Ok(out)
}

pub fn write_annotations(path: &Path, images: &[ImageMeta]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let io = |e: csv::Error| Error::parse(path, 0, e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for m in images {
        for b in &m.boxes {
            w.write_record([
                m.image_id.clone(),
                b.class_label.clone(),
                b.x_min.to_string(),
                b.y_min.to_string(),
                b.x_max.to_string(),
                b.y_max.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(Error::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<ImageMeta>> {
        read_annotations(text.as_bytes(), Path::new("fixture.csv"))
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse("filename,class,x_min,y_min,x_max,y_max\n").unwrap().is_empty());
    }

    #[test]
    fn rows_group_by_filename() {
        let v = parse(
            "filename,class,x_min,y_min,x_max,y_max\n\
             a.png,stop,1,2,10,12\n\
             b.png,yield,0,0,5,5\n\
             a.png,speed,20,20,30,31\n",
        )
        .unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].image_id, "a.png");
        assert_eq!(v[0].boxes.len(), 2);
        assert_eq!(v[0].boxes[1], BoundingBox::new("speed", 20, 20, 30, 31));
    }

    #[test]
    fn malformed_row_names_line() {
        let err =
            parse("filename,class,x_min,y_min,x_max,y_max\na.png,stop,1,2,10,12\na.png,stop,x,2,10,12\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse("filename,class,x_min,y_min,x_max,y_max\na.png,stop,1,2,10\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn bad_box_names_image() {
        let err = parse("filename,class,x_min,y_min,x_max,y_max\nimg7.png,stop,10,2,10,12\n").unwrap_err();
        assert!(err.to_string().contains("img7.png"), "{err}");
    }

    #[test]
    fn wrong_header() {
        assert!(matches!(parse("file,class,a,b,c,d\n"), Err(Error::Parse { line: 1, .. })));
    }
}
