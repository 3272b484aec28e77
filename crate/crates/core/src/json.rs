//! JSON output with every float written to 17 significant digits, which is
//! enough for an exact `f64` round trip.

use std::io;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

use crate::error::{Error, Result};

/// `{:.16e}` rendering of a finite float: one leading digit plus sixteen.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct Digits<F>(F);

macro_rules! forward {
    ($($name:ident $(, $arg:ident : $ty:ty)*;)*) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.0.$name(w $(, $arg)*)
            }
        )*
    };
}

impl<F: Formatter> Formatter for Digits<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(fmt_f64(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    forward! {
        begin_array;
        end_array;
        begin_array_value, first: bool;
        end_array_value;
        begin_object;
        end_object;
        begin_object_key, first: bool;
        end_object_key;
        begin_object_value;
        end_object_value;
    }
}

/// Compact JSON with 17-digit floats.
pub fn to_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits(CompactFormatter));
    value.serialize(&mut ser)?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

/// Indented JSON with 17-digit floats.
pub fn to_string_pretty<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    let mut s = String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
