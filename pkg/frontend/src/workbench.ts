/** Session controller: every text change round-trips through the server. */

import { ApiClient, ApiError, GapSpan } from "./api.js";
import { findGaps, initialState, WorkbenchState } from "./state.js";

export class Workbench {
  state: WorkbenchState = initialState();

  constructor(
    private api: ApiClient,
    private onChange: (state: WorkbenchState) => void = () => {},
  ) {}

  private emit(): void {
    this.onChange(this.state);
  }

  private async guard<T>(action: () => Promise<T>): Promise<T | null> {
    this.state.busy = true;
    this.state.error = null;
    try {
      return await action();
    } catch (err) {
      // non-destructive: keep the current state, surface a banner
      this.state.error = err instanceof ApiError ? err.message : String(err);
      return null;
    } finally {
      this.state.busy = false;
      this.emit();
    }
  }

  /** Create a session for a pasted damaged text. */
  async start(text: string): Promise<void> {
    await this.guard(async () => {
      const { id } = await this.api.createSession(text);
      await this.refresh(id);
    });
  }

  /** Attach to an existing session. */
  async load(sessionId: string): Promise<void> {
    await this.guard(() => this.refresh(sessionId));
  }

  private async refresh(sessionId: string): Promise<void> {
    const session = await this.api.getSession(sessionId);
    this.state.sessionId = session.id;
    this.state.text = session.text;
    this.state.history = session.history;
    this.state.selected = null;
    this.state.proposal = null;
    this.state.hoveredRank = null;
    this.state.hoveredStep = 0;
  }

  gaps(): GapSpan[] {
    return findGaps(this.state.text);
  }

  /** Ask the server for ranked hypotheses for one gap. */
  async selectGap(gap: GapSpan): Promise<void> {
    if (!this.state.sessionId) return;
    const id = this.state.sessionId;
    await this.guard(async () => {
      const proposal = await this.api.propose(id, gap.start, gap.length);
      this.state.selected = gap;
      this.state.proposal = proposal;
      this.state.hoveredRank = null;
      this.state.hoveredStep = 0;
    });
  }

  /** Keyboard flow: select the next gap after the current selection. */
  async selectNextGap(): Promise<void> {
    const gaps = this.gaps();
    if (gaps.length === 0) return;
    const from = this.state.selected ? this.state.selected.start : -1;
    const next = gaps.find((g) => g.start > from) ?? gaps[0];
    await this.selectGap(next);
  }

  hover(rank: number | null, step: number = 0): void {
    this.state.hoveredRank = rank;
    this.state.hoveredStep = step;
    this.emit();
  }

  /** Accept the hypothesis at a 1-based rank. */
  async acceptRank(rank: number): Promise<void> {
    const { proposal } = this.state;
    if (!proposal) return;
    const hyp = proposal.hypotheses[rank - 1];
    if (!hyp) return;
    await this.acceptText(hyp.text);
  }

  /** Accept a manually entered restoration (human override). */
  async acceptOverride(text: string): Promise<void> {
    await this.acceptText(text);
  }

  private async acceptText(text: string): Promise<void> {
    const { sessionId, selected } = this.state;
    if (!sessionId || !selected) return;
    await this.guard(async () => {
      await this.api.accept(sessionId, selected.start, selected.length, text);
      // re-render from the server's session state, never locally
      await this.refresh(sessionId);
    });
  }
}
