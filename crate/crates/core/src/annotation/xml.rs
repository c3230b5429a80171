//! Per-frame XML annotation files.
//!
//! ```text
//! <annotation>
//!   <video>vid001</video>
//!   <frame>17</frame>
//!   <object>
//!     <id>0</id>
//!     <behaviour>walking</behaviour>
//!     <bndbox><xmin>10</xmin><ymin>20</ymin><xmax>110</xmax><ymax>220</ymax></bndbox>
//!   </object>
//! </annotation>
//! ```
//!
//! Unknown elements are skipped on read.

use std::fmt::Write as _;

use quick_xml::escape::escape;
use quick_xml::events::Event;
use quick_xml::Reader;

use super::{ApeInstance, BoundingBox, FrameAnnotation};
use crate::behaviour::BehaviourLabel;
use crate::error::{Error, Result};

#[derive(Default)]
struct PartialObject {
    id: Option<u32>,
    behaviour: Option<String>,
    xmin: Option<u32>,
    ymin: Option<u32>,
    xmax: Option<u32>,
    ymax: Option<u32>,
}

impl PartialObject {
    fn finish(self) -> Result<ApeInstance> {
        let missing = |what: &str| Error::Validation(format!("object is missing <{what}>"));
        let behaviour: BehaviourLabel = self.behaviour.ok_or_else(|| missing("behaviour"))?.parse()?;
        let bbox = BoundingBox::new(
            self.xmin.ok_or_else(|| missing("xmin"))?,
            self.ymin.ok_or_else(|| missing("ymin"))?,
            self.xmax.ok_or_else(|| missing("xmax"))?,
            self.ymax.ok_or_else(|| missing("ymax"))?,
        )?;
        Ok(ApeInstance {
            ape_id: self.id.ok_or_else(|| missing("id"))?,
            behaviour,
            bbox,
        })
    }
}

fn number(tag: &str, text: &str) -> Result<u32> {
    text.trim()
        .parse()
        .map_err(|_| Error::Validation(format!("<{tag}> is not a non-negative integer: `{text}`")))
}

pub fn parse_frame_annotation(document: &[u8]) -> Result<FrameAnnotation> {
    let mut reader = Reader::from_reader(document);
    let mut buf = Vec::new();
    let mut path: Vec<String> = Vec::new();
    let mut text = String::new();
    let mut video_id = None;
    let mut frame_index = None;
    let mut instances = Vec::new();
    let mut object: Option<PartialObject> = None;
    let mut saw_root = false;

    loop {
        let event = reader.read_event_into(&mut buf).map_err(|e| Error::Xml {
            offset: reader.error_position(),
            message: e.to_string(),
        })?;
        match event {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if path.is_empty() {
                    if name != "annotation" {
                        return Err(Error::Xml {
                            offset: reader.buffer_position(),
                            message: format!("root element must be <annotation>, found <{name}>"),
                        });
                    }
                    saw_root = true;
                }
                if name == "object" && path.len() == 1 {
                    object = Some(PartialObject::default());
                }
                path.push(name);
                text.clear();
            }
            Event::Text(t) => {
                let s = t.unescape().map_err(|e| Error::Xml {
                    offset: reader.buffer_position(),
                    message: e.to_string(),
                })?;
                text.push_str(&s);
            }
            Event::End(_) => {
                let name = path.pop().unwrap_or_default();
                let parent = path.last().map(String::as_str);
                match (parent, name.as_str()) {
                    (Some("annotation"), "video") => video_id = Some(text.trim().to_string()),
                    (Some("annotation"), "frame") => frame_index = Some(number("frame", &text)?),
                    (Some("annotation"), "object") => {
                        if let Some(obj) = object.take() {
                            instances.push(obj.finish()?);
                        }
                    }
                    (Some("object"), "id") => {
                        if let Some(obj) = object.as_mut() {
                            obj.id = Some(number("id", &text)?);
                        }
                    }
                    (Some("object"), "behaviour") => {
                        if let Some(obj) = object.as_mut() {
                            obj.behaviour = Some(text.trim().to_string());
                        }
                    }
                    (Some("bndbox"), tag @ ("xmin" | "ymin" | "xmax" | "ymax")) => {
                        if let Some(obj) = object.as_mut() {
                            let v = Some(number(tag, &text)?);
                            match tag {
                                "xmin" => obj.xmin = v,
                                "ymin" => obj.ymin = v,
                                "xmax" => obj.xmax = v,
                                _ => obj.ymax = v,
                            }
                        }
                    }
                    _ => {}
                }
                text.clear();
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !saw_root || !path.is_empty() {
        return Err(Error::Xml {
            offset: reader.buffer_position(),
            message: "document ended before </annotation>".into(),
        });
    }
    Ok(FrameAnnotation {
        video_id: video_id.ok_or_else(|| Error::Validation("missing <video>".into()))?,
        frame_index: frame_index.ok_or_else(|| Error::Validation("missing <frame>".into()))?,
        instances,
    })
}

pub fn serialize_frame_annotation(frame: &FrameAnnotation) -> String {
    let mut out = String::new();
    out.push_str("<annotation>\n");
    let _ = writeln!(out, "  <video>{}</video>", escape(frame.video_id.as_str()));
    let _ = writeln!(out, "  <frame>{}</frame>", frame.frame_index);
    for inst in &frame.instances {
        let b = inst.bbox;
        out.push_str("  <object>\n");
        let _ = writeln!(out, "    <id>{}</id>", inst.ape_id);
        let _ = writeln!(out, "    <behaviour>{}</behaviour>", inst.behaviour);
        let _ = writeln!(
            out,
            "    <bndbox><xmin>{}</xmin><ymin>{}</ymin><xmax>{}</xmax><ymax>{}</ymax></bndbox>",
            b.xmin, b.ymin, b.xmax, b.ymax
        );
        out.push_str("  </object>\n");
    }
    out.push_str("</annotation>\n");
    out
}
