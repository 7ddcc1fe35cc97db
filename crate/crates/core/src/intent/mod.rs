//! Multimodal intents: gaze fixation, blink confirmation, voice grammar.

pub mod arbiter;
pub mod gaze;
pub mod router;
pub mod types;
pub mod voice;

pub use arbiter::{Arbiter, DeliveryReceipt};
pub use gaze::{confirm_selection, detect_fixation, map_fixation_to_object};
pub use router::{gaze_intent, select_object, ActionRouter, GazeConfig, GazeSelection, RoutedEvent};
pub use types::{ActionState, Activity, BlinkEvent, Fixation, GazeSample, Intent, IntentSource, ObjectBox};
pub use voice::{parse_voice_command, Grammar, NoMatch};
