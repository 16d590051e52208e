/** Workbench state and the pure derivations the renderer consumes.
 *
 * The state mirrors the server session after every acknowledged
 * mutation; nothing here edits text locally.
 */

import type { AcceptedStep, GapSpan, ProposeResponse } from "./api.js";

export interface WorkbenchState {
  sessionId: string | null;
  text: string;
  history: AcceptedStep[];
  selected: GapSpan | null;
  proposal: ProposeResponse | null;
  hoveredRank: number | null; // 1-based rank of the hovered hypothesis
  hoveredStep: number;        // decode step whose attention row is shown
  error: string | null;
  busy: boolean;
}

export function initialState(): WorkbenchState {
  return {
    sessionId: null,
    text: "",
    history: [],
    selected: null,
    proposal: null,
    hoveredRank: null,
    hoveredStep: 0,
    error: null,
    busy: false,
  };
}

/** Maximal runs of '-' in the current text, left to right. */
export function findGaps(text: string): GapSpan[] {
  const gaps: GapSpan[] = [];
  let i = 0;
  while (i < text.length) {
    if (text[i] === "-") {
      let j = i;
      while (j < text.length && text[j] === "-") j++;
      gaps.push({ start: i, length: j - i });
      i = j;
    } else {
      i++;
    }
  }
  return gaps;
}

/** Spans already filled by accepted restorations (absolute positions). */
export function restoredSpans(history: AcceptedStep[]): GapSpan[] {
  return history.map((step) => ({ start: step.start, length: step.length }));
}

export interface CharIntensity {
  /** Server-sent scaled attention value for this window character. */
  intensity: number;
  /** True when the character lies in the region under prediction. */
  inGap: boolean;
}

/**
 * Per-character heatmap values for the hovered hypothesis, taken verbatim
 * from the server's scaled attention row — no client-side rescaling.
 */
export function heatmapRow(state: WorkbenchState): CharIntensity[] | null {
  const { proposal, hoveredRank, hoveredStep } = state;
  if (!proposal || hoveredRank === null) return null;
  const hyp = proposal.hypotheses[hoveredRank - 1];
  if (!hyp || hyp.attention.length === 0) return null;
  const step = Math.min(hoveredStep, hyp.attention.length - 1);
  const row = hyp.attention[step];
  return row.map((value, i) => ({
    intensity: value,
    inGap: proposal.window[i] === "?",
  }));
}
