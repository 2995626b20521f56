// Orchestrates one session tab: submits gestures with an optimistic
// sequence number, refreshes on conflicts, and keeps the view honest
// about what the server has confirmed.

import { ApiError, GatewayClient } from "./api.js";
import type { Gesture } from "./gestures.js";
import { eventFor } from "./gestures.js";
import type { LogRecord, ProposalRecord, Stage } from "./types.js";
import type { SessionView } from "./state.js";
import { acceptSession, emptyView, ingest, markDownstream } from "./state.js";

export type SubmitOutcome =
  | { kind: "applied"; seq: number }
  | { kind: "conflict"; code: string; message: string }
  | { kind: "rejected"; code: string; message: string }
  | { kind: "failed"; message: string };

export class SessionController {
  readonly view: SessionView;

  constructor(private readonly client: GatewayClient) {
    this.view = emptyView();
  }

  private get sessionId(): string {
    const session = this.view.session;
    if (!session) {
      throw new Error("no session attached");
    }
    return session.session_id;
  }

  async open(queryText: string, userId?: string): Promise<void> {
    const { session } = await this.client.openSession(queryText, userId);
    acceptSession(this.view, session);
    await this.syncEvents();
  }

  async attach(sessionId: string): Promise<void> {
    const { session } = await this.client.getSession(sessionId);
    acceptSession(this.view, session);
    await this.syncEvents();
  }

  // Pull the panels back in line with the server. On failure the old
  // panels stay up but marked stale, with a retry banner.
  async refresh(): Promise<boolean> {
    try {
      const { session } = await this.client.getSession(this.sessionId);
      acceptSession(this.view, session);
      return true;
    } catch (exc) {
      this.view.stale = true;
      this.view.banner = {
        kind: "retry",
        code: exc instanceof ApiError ? exc.code : null,
        message: exc instanceof Error ? exc.message : String(exc),
      };
      return false;
    }
  }

  async submit(gesture: Gesture): Promise<SubmitOutcome> {
    const session = this.view.session;
    if (!session) {
      throw new Error("no session attached");
    }
    const body = eventFor(gesture, session.session_id, session.log_offset + 1);
    // Optimistic: downstream panels go dirty the moment the gesture
    // leaves, and come back clean with the response or the next refresh.
    markDownstream(this.view, body.stage);
    const editedBefore =
      body.action.kind === "edit_section"
        ? session.answer.sections.find((s) => s.section_id === (body.action as { section_id: string }).section_id)
        : undefined;
    try {
      const res = await this.client.submitFeedback(session.session_id, body);
      acceptSession(this.view, res.session);
      this.view.banner = null;
      this.view.pendingRetry = null;
      if (body.action.kind === "edit_section" && editedBefore) {
        this.view.editDiffs.push({
          sectionId: editedBefore.section_id,
          before: editedBefore.text,
          after: body.action.new_text,
        });
      }
      return { kind: "applied", seq: res.applied_seq };
    } catch (exc) {
      if (exc instanceof ApiError && exc.code === "stale_sequence") {
        // Someone (agent, template, another tab) moved the log first.
        // Refresh, then hold the gesture for an explicit retry.
        await this.refresh();
        this.view.pendingRetry = gesture;
        this.view.banner = { kind: "retry", code: exc.code, message: exc.message };
        return { kind: "conflict", code: exc.code, message: exc.message };
      }
      if (exc instanceof ApiError) {
        await this.refresh();
        this.view.banner = { kind: "error", code: exc.code, message: exc.message };
        return { kind: "rejected", code: exc.code, message: exc.message };
      }
      this.view.stale = true;
      const message = exc instanceof Error ? exc.message : String(exc);
      this.view.banner = { kind: "retry", code: null, message };
      return { kind: "failed", message };
    }
  }

  async retryPending(): Promise<SubmitOutcome | null> {
    const gesture = this.view.pendingRetry;
    if (!gesture) {
      return null;
    }
    this.view.pendingRetry = null;
    this.view.banner = null;
    return this.submit(gesture);
  }

  async loadProposals(stage: Stage): Promise<ProposalRecord[]> {
    const { proposals } = await this.client.listProposals(this.sessionId, stage);
    // Re-listing re-proposes; keep one row per proposal id.
    const byId = new Map(this.view.proposals.map((p) => [p.proposal_id, p]));
    for (const p of proposals) {
      byId.set(p.proposal_id, p);
    }
    this.view.proposals = [...byId.values()];
    return proposals;
  }

  async decide(proposalId: string, decision: "accept" | "reject"): Promise<void> {
    const { proposal, session } = await this.client.confirmProposal(this.sessionId, proposalId, decision);
    acceptSession(this.view, session);
    this.view.proposals = this.view.proposals.map((p) =>
      p.proposal_id === proposal.proposal_id ? proposal : p,
    );
    await this.syncEvents();
  }

  // Feed entry point: order, buffer, and refresh when the log moves
  // past the rendered snapshot.
  async onFeedRecord(record: LogRecord): Promise<void> {
    const result = ingest(this.view, record);
    if (result === "applied" && this.view.session && this.view.feedCursor > this.view.session.log_offset) {
      await this.refresh();
    }
  }

  async syncEvents(): Promise<void> {
    const { events } = await this.client.eventsSince(this.sessionId, this.view.feedCursor);
    for (const record of events) {
      ingest(this.view, record);
    }
  }

  toggleMode(): void {
    this.view.mode = this.view.mode === "debug" ? "shadow" : "debug";
  }
}
