/** Pure HTML renderers: state in, markup out. No DOM access here. */

import type { GapSpan } from "./api.js";
import { CharIntensity, findGaps, heatmapRow, restoredSpans, WorkbenchState } from "./state.js";

function escapeHtml(s: string): string {
  return s.replace(/[&<>"']/g, (c) => ({
    "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;", "'": "&#39;",
  })[c] as string);
}

function spanContains(span: GapSpan, i: number): boolean {
  return span.start <= i && i < span.start + span.length;
}

/**
 * The inscription view: legible text, selectable gap chips for each run
 * of '-', accepted restorations styled distinctly, and (when a
 * hypothesis is hovered) per-character heatmap intensities painted with
 * one hue for the gap region and another for the context.
 */
export function renderText(state: WorkbenchState): string {
  const gaps = findGaps(state.text);
  const restored = restoredSpans(state.history);
  const heat = heatmapRow(state);
  const windowStart = state.proposal?.window_start ?? 0;

  const hovered =
    state.proposal && state.hoveredRank !== null
      ? state.proposal.hypotheses[state.hoveredRank - 1]
      : null;

  const parts: string[] = [];
  let i = 0;
  while (i < state.text.length) {
    const gap = gaps.find((g) => g.start === i);
    if (gap) {
      const selected =
        state.selected && state.selected.start === gap.start && state.selected.length === gap.length;
      if (selected && hovered) {
        // preview the hovered fill in place, heat-painted in the gap hue
        for (let k = 0; k < gap.length; k++) {
          const w = gap.start + k - windowStart;
          let style = "";
          if (heat && w >= 0 && w < heat.length) {
            style = ` style="--heat:${heat[w].intensity}" data-intensity="${heat[w].intensity}"`;
          }
          parts.push(
            `<span class="ch preview heat-gap"${style}>${escapeHtml(hovered.text[k] ?? "?")}</span>`,
          );
        }
      } else {
        parts.push(
          `<button class="gap-chip${selected ? " selected" : ""}" ` +
            `data-gap-start="${gap.start}" data-gap-length="${gap.length}">` +
            `${gap.length}</button>`,
        );
      }
      i += gap.length;
      continue;
    }
    const restoredHere = restored.some((s) => spanContains(s, i));
    const classes = ["ch"];
    if (restoredHere) classes.push("restored");
    let style = "";
    if (heat && state.proposal) {
      const w = i - windowStart;
      if (w >= 0 && w < heat.length) {
        const cell: CharIntensity = heat[w];
        classes.push(cell.inGap ? "heat-gap" : "heat-context");
        style = ` style="--heat:${cell.intensity}" data-intensity="${cell.intensity}"`;
      }
    }
    parts.push(`<span class="${classes.join(" ")}"${style}>${escapeHtml(state.text[i])}</span>`);
    i++;
  }
  return `<div class="text-view">${parts.join("")}</div>`;
}

/** Ranked hypothesis list with confidences; empty state when nothing proposed. */
export function renderHypotheses(state: WorkbenchState): string {
  if (!state.proposal) {
    return `<div class="hypotheses empty">Select a gap to see restoration hypotheses.</div>`;
  }
  const rows = state.proposal.hypotheses.map((h, idx) => {
    const rank = idx + 1;
    const hovered = state.hoveredRank === rank ? " hovered" : "";
    return (
      `<li class="hypothesis${hovered}" data-rank="${rank}">` +
      `<span class="rank">${rank}</span>` +
      `<span class="fill">${escapeHtml(h.text)}</span>` +
      `<span class="log-prob">${h.log_prob.toFixed(3)}</span>` +
      `<button class="accept" data-rank="${rank}">accept</button>` +
      `</li>`
    );
  });
  return (
    `<ol class="hypotheses">${rows.join("")}</ol>` +
    `<form class="override"><input name="override" placeholder="manual restoration" />` +
    `<button type="submit">accept override</button></form>`
  );
}

export function renderBanner(state: WorkbenchState): string {
  if (!state.error) return "";
  return `<div class="banner error">${escapeHtml(state.error)}</div>`;
}

export function renderApp(state: WorkbenchState): string {
  return renderBanner(state) + renderText(state) + renderHypotheses(state);
}
