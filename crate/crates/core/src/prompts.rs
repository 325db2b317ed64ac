//! Prompt templates sent to frontier, world-model, judge and policy
//! endpoints, together with the formatting helpers that fill their slots.

use crate::trajectory::{CanonicalAction, action_prompt_text};

pub const IMG_TO_CODE: &str = r#"You are an expert mobile UI developer. Given a screenshot of a mobile interface, you must first analyze it and then generate clean, responsive HTML code.

Your task has TWO steps:
1. REASONING: Analyze the screenshot and plan the HTML structure.
2. HTML GENERATION: Create the HTML code based on your analysis.

Focus on these two critical criteria:
1. Each button's function should be "inferable" / "differentiable" - users must be able to understand what each button does.
2. Each text content should be well-represented in the HTML output - all visible text must be accurately captured.

In your REASONING, address:
- The overall structure and layout of the screen (header, main content, footer, etc.)
- Important UI elements and their hierarchy (buttons, text, images, icons, etc.)
- Which parts of the screen are most important for functionality
- How to ensure buttons are clearly differentiated and their functions are inferable
- How to accurately represent all text content
- Color scheme and visual styling that supports clarity
- Any interactive elements and their purposes

Requirements for HTML:
1. Generate complete, valid HTML5 code.
2. Choose between using inline CSS and utility classes from Bootstrap, Tailwind CSS, or MUI for styling.
3. Use mobile-first design principles matching screenshot dimensions.
4. For images, use inline SVG placeholders with explicit width and height.
5. Make it visually as close to the provided screenshot.
6. Each button's function must be "inferable" / "differentiable".
7. All text content from the screenshot must be well-represented.

Return ONLY a JSON object with this exact structure:
{
  "reasoning": "Your detailed analysis and planning here",
  "html": "Your complete HTML code here"
}"#;

const LOOK_AHEAD: &str = r#"You are a GUI Agent.

Action: {action}

You are given a current screenshot state (first image), action and the next state (second image).
Action is also visually annotated in the first image
1. Clicks: Red circle with crosshair + yellow center dot
2. Scrolls: Blue line with green start point + red end point or based on direction

Generate reasoning on what this next state would look like as if you were only given the current screenshot.
Focus only on the changes that can be predicted from the current screenshots.
In the reasoning, do not mention the visual annotation of the action or the existence of the ground truth next state.
Only generate the reasoning, nothing else."#;

/// Same task as [`LOOK_AHEAD`] without access to the next state.
const NO_LOOK_AHEAD: &str = r#"You are a GUI Agent.

Action: {action}

You are given a current screenshot state. Action is also visually annotated in the image
1. Clicks: Red circle with crosshair + yellow center dot
2. Scrolls: Blue line with green start point + red end point or based on direction

Generate reasoning on what the next state would look like after the action.
In the reasoning, do not mention the visual annotation of the action.
Only generate the reasoning, nothing else."#;

const WM: &str = r#"You are an expert mobile UI World Model that can accurately predict the next state given an action. Given a screenshot of a mobile interface and an action, you must generate clean, responsive HTML code that represents the state of the interface AFTER the action is performed. First generate reasoning about what the next state should look like based on the action. Afterwards, generate the HTML code representing the next state that logically follows the action. You will render this HTML in a mobile viewport to see how similar it looks and acts like the mobile screenshot.

Requirements:
1. Provide reasoning about what the next state should look like based on the action
2. Generate complete, valid HTML5 code
3. Choose between using inline CSS and utility classes from Bootstrap, Tailwind CSS, or MUI for styling, depending on which option generates the closest code to the screenshot.
4. Use mobile-first design principles matching screenshot dimensions.
5. For images, use inline SVG placeholders with explicit width and height attributes that match the approximate dimensions from the screenshot. Matching the approximate color is also good.
6. Use modern web standards and best practices
7. Return ONLY the HTML code, no explanations or markdown formatting
8. The generated HTML should render properly in a mobile viewport.
9. Generated HTML should look like the screen that logically follows the current screen and the action.

Action: {action}

Output format:

Next State Reasoning: <your reasoning about what the next state should look like>

HTML: <valid_html_code >

Generate the next state reasoning and the next state in html:"#;

const IACC: &str = r#"You are an expert in evaluating the performance of a mobile emulator. The mobile emulator is designed to navigate the UI change based on human instruction.

Inputs:
Current UI Screenshot: The present state of the cellphone's user interface.
Next UI Screenshot: The mobile emulator generated UI indicating the next state of the cellphone's user interface based on human instruction.
Human instruction: The action applied on the current UI screenshot.

Your goal is to determine whether the mobile emulator successfully predicts the next UI image with current information and layout based on the current UI and the user action.

Consider these aspects:
- Does the generated UI show a plausible result of applying the action?
- Is the layout and structure consistent with what would happen after the action?
- Are interactive elements (buttons, inputs, etc.) in expected states?
- Does the content reflect the expected changes from the action?

IMPORTANT
Format your response into a JSON map as shown below:
{
  "Thoughts": "<your thoughts and reasoning process>",
  "Status": "success" or "failure"
}

Human instruction: {action}"#;

const ACTION_TYPES: &str = r#"Available action types:
- TAP: Tap on a location. Format: {"action_type": "TAP", "x": <x>, "y": <y>}
- SCROLL: Scroll in a direction. Format: {"action_type": "SCROLL", "direction": "<up|down|left|right>"}
- TYPE: Type text. Format: {"action_type": "TYPE", "text": "<text>"}
- BACK: Press back button. Format: {"action_type": "BACK"}
- HOME: Press home button. Format: {"action_type": "HOME"}
- ENTER: Press enter key. Format: {"action_type": "ENTER"}
- LONG_PRESS: Long press on a location. Format: {"action_type": "LONG_PRESS", "x": <x>, "y": <y>}"#;

const OPEN_APP_TYPE: &str =
    r#"- OPEN_APP: Open an app. Format: {"action_type": "OPEN_APP", "app_name": "<name>"}"#;

const GRID: &str =
    "Coordinates are in range [0, 1000] where (0,0) is top-left and (1000,1000) is bottom-right.";

const ALT: &str = r#"You are an AI agent that can operate an Android phone. Given a goal and the current screenshot, suggest alternative actions that could be taken.

Goal: {goal}
Previous actions: {history}
The following action has already been suggested (DO NOT repeat this action): {gt_action}

{action_types}

{grid}

Suggest {num_alternatives} DIFFERENT alternative actions that could also make progress toward the goal.

Critical requirements:
1. Each alternative MUST be a completely different action from the one already suggested above.
2. Do NOT repeat or slightly modify the already-suggested action (e.g., if the suggested action is a TAP at (500, 300), do NOT suggest a TAP at (500, 301) or nearby coordinates).
3. For TAP actions, choose DIFFERENT UI elements to tap, not the same element with slightly different coordinates.
4. Each alternative should represent a meaningfully different approach to achieving the goal.

For each action, explain the reasoning behind it.

You must output exactly {num_alternatives} actions numbered 1 to {num_alternatives}:
{1: {Reason: ..., Action: {"action_type":...}}, ..., {num_alternatives}: {Reason: ..., Action: {"action_type":...}}}"#;

const SELECT: &str = r#"You are an AI agent that can operate an Android phone. Given a goal and the current screenshot, select the best action from the candidates below.

Goal: {goal}
Previous actions: {history}
Candidate actions: {candidates}

{action_types}

{grid}

Analyze each candidate action carefully based on the screenshot and goal. Select the candidate most likely to help achieve the goal.

Output format:
Reason: <your analysis of why this candidate is best>
Best: <candidate number>"#;

const CONFIDENCE_SCALE: &str = r#"IMPORTANT: Use the FULL range of confidence scores to differentiate action quality:
- 0.9-1.0: Clearly the optimal action, directly advances the goal
- 0.7-0.8: Good action, makes progress but may not be the most efficient path
- 0.5-0.6: Acceptable action, loosely related to goal but indirect
- 0.3-0.4: Weak action, unlikely to help but not harmful
- 0.1-0.2: Poor action, probably wrong target or type

Avoid defaulting to 1.0 or 0.9 unless the action is clearly optimal. Be critical and discriminating."#;

const VALUE_NO_WM: &str = r#"You are an AI agent evaluating whether an action will help achieve a goal on an Android phone.

Goal: {goal}
Previous actions: {history}
The action being evaluated: {action}
Reason for this action: {reason}

You are given the CURRENT screenshot showing the UI state before the action.

{action_types}

{grid}

Your task is to judge whether the action is a reasonable step toward achieving the goal based on the current UI state.

Evaluate based on these criteria:
1. Does the action target the correct UI element or area visible on screen?
2. Is the action type appropriate for the current context?
3. How directly does this action advance the goal vs. being a roundabout step?

Respond in JSON format:
{"Reason": "Your explanation", "Judgement": "valid" or "invalid", "Confidence": <score>}

{scale}"#;

const VALUE_WM: &str = r#"You are an AI agent evaluating whether a predicted action will help achieve a goal on an Android phone.

Goal: {goal}
Previous actions: {history}
The action being evaluated: {action}
Reason for this action: {reason}

You will be given two screenshots:
1. BEFORE screenshot: The current UI state before the action
2. AFTER screenshot: The predicted UI state after performing the action

{action_types}

{grid}

Your task is to judge whether the action is a reasonable step toward achieving the goal.

Evaluate based on this criterion: Does the predicted "after" screenshot show expected progress toward the goal?

Respond in JSON format:
{"Reason": "Your explanation", "Judgement": "valid" or "invalid", "Confidence": <score>}

{scale}"#;

/// Substitutes `{name}` slots. Values are inserted verbatim and never
/// re-scanned, so braces inside them are safe.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (name, value) in slots {
            let needle_len = name.len() + 2;
            if tail.len() >= needle_len
                && tail.as_bytes()[needle_len - 1] == b'}'
                && &tail[1..needle_len - 1] == *name
            {
                out.push_str(value);
                rest = &tail[needle_len..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

fn action_types(with_open_app: bool) -> String {
    if with_open_app {
        format!("{ACTION_TYPES}\n{OPEN_APP_TYPE}")
    } else {
        ACTION_TYPES.to_owned()
    }
}

pub fn img_to_code() -> &'static str {
    IMG_TO_CODE
}

pub fn look_ahead(action: &CanonicalAction) -> String {
    fill(LOOK_AHEAD, &[("action", &action_prompt_text(action))])
}

pub fn no_look_ahead(action: &CanonicalAction) -> String {
    fill(NO_LOOK_AHEAD, &[("action", &action_prompt_text(action))])
}

pub fn world_model(action: &CanonicalAction) -> String {
    fill(WM, &[("action", &action_prompt_text(action))])
}

pub fn iacc(action: &CanonicalAction) -> String {
    fill(IACC, &[("action", &action_prompt_text(action))])
}

pub fn history_text(history: &[String]) -> String {
    if history.is_empty() {
        "None".to_owned()
    } else {
        history.join("; ")
    }
}

pub fn alternatives(goal: &str, history: &[String], gt: &CanonicalAction, num_alternatives: usize) -> String {
    let n = num_alternatives.to_string();
    fill(
        ALT,
        &[
            ("goal", goal),
            ("history", &history_text(history)),
            ("gt_action", &action_prompt_text(gt)),
            ("action_types", &action_types(false)),
            ("grid", GRID),
            ("num_alternatives", &n),
        ],
    )
}

/// Candidate list rendered as `1. <action> (Reason: ...)` lines.
pub fn candidates_text(candidates: &[(CanonicalAction, Option<String>)]) -> String {
    let mut s = String::new();
    for (i, (a, reason)) in candidates.iter().enumerate() {
        s.push_str(&format!("\n{}. {}", i + 1, action_prompt_text(a)));
        if let Some(r) = reason.as_deref().filter(|r| !r.is_empty()) {
            s.push_str(&format!(" (Reason: {r})"));
        }
    }
    s
}

pub fn select(goal: &str, history: &[String], candidates: &[(CanonicalAction, Option<String>)]) -> String {
    fill(
        SELECT,
        &[
            ("goal", goal),
            ("history", &history_text(history)),
            ("candidates", &candidates_text(candidates)),
            ("action_types", &action_types(false)),
            ("grid", GRID),
        ],
    )
}

pub fn value(goal: &str, history: &[String], action: &CanonicalAction, reason: &str, with_wm: bool) -> String {
    fill(
        if with_wm { VALUE_WM } else { VALUE_NO_WM },
        &[
            ("goal", goal),
            ("history", &history_text(history)),
            ("action", &action_prompt_text(action)),
            ("reason", if reason.is_empty() { "N/A" } else { reason }),
            ("action_types", &action_types(true)),
            ("grid", GRID),
            ("scale", CONFIDENCE_SCALE),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_leaves_literal_braces_alone() {
        assert_eq!(fill("{a} {\"k\": {b}} {c", &[("a", "1"), ("b", "{b}")]), "1 {\"k\": {b}} {c");
    }

    #[test]
    fn wm_prompt_carries_action_and_format() {
        let p = world_model(&CanonicalAction::click(500, 300));
        assert!(p.contains(r#"Action: {"action_type":"TAP","x":500,"y":300}"#), "{p}");
        assert!(p.contains("\nHTML: <valid_html_code >"));
        assert!(!p.contains("{action}"));
    }

    #[test]
    fn alt_prompt_fills_count() {
        let p = alternatives("g", &[], &CanonicalAction::bare(crate::trajectory::ActionKind::SystemBack), 2);
        assert!(p.contains("Suggest 2 DIFFERENT"));
        assert!(p.contains("numbered 1 to 2"));
        assert!(p.contains("Previous actions: None"));
        assert!(p.contains(r#"{"action_type": "TAP", "x": <x>, "y": <y>}"#));
    }

    #[test]
    fn value_prompts_differ_by_mode() {
        let a = CanonicalAction::bare(crate::trajectory::ActionKind::SystemHome);
        assert!(value("g", &[], &a, "", true).contains("AFTER screenshot"));
        assert!(value("g", &[], &a, "", false).contains("CURRENT screenshot"));
        assert!(value("g", &[], &a, "", false).contains("OPEN_APP"));
    }
}
