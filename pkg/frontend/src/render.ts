// String-template rendering. Every displayed value comes from the
// session record or the event log; the only client-side inventions are
// ephemeral marks (dirty, stale, banners). Affordances carry a
// data-gesture attribute naming the single gesture they trigger, which
// is what the contract tests pin against the action taxonomy.

import { gesturesForStage } from "./gestures.js";
import type {
  AnswerRecord,
  EvidenceSetRecord,
  PipelineStage,
  QueryPlanRecord,
  RelevanceLabel,
} from "./types.js";
import type { SessionView } from "./state.js";
import { panelStatus, timelineEntries } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const LABELS: RelevanceLabel[] = ["relevant", "partially_relevant", "irrelevant"];

function dirtyMark(dirty: boolean): string {
  return dirty ? '<span class="dirty-indicator">re-executing…</span>' : "";
}

function panelShell(view: SessionView, stage: PipelineStage, title: string, body: string): string {
  const { status, dirty } = panelStatus(view, stage);
  return `<section class="panel" data-stage="${stage}" data-status="${status}" data-dirty="${dirty}">
<header><h2>${title}</h2>${dirtyMark(dirty)}</header>
${body}
</section>`;
}

function renderPlanPanel(view: SessionView, plan: QueryPlanRecord): string {
  const rows = plan.sub_queries
    .map((sub) => {
      const constraints = sub.constraints
        .map(
          ([k, v]) =>
            `<button class="chip" data-gesture="constraint_edit" data-sub-id="${escapeHtml(sub.sub_id)}" data-key="${escapeHtml(k)}">${escapeHtml(k)}=${escapeHtml(v)}</button>`,
        )
        .join("");
      return `<li data-sub-id="${escapeHtml(sub.sub_id)}" draggable="true" data-gesture="row_drag">
<span class="drag-handle" title="drag to reorder">⋮⋮</span>
<span class="sub-text">${escapeHtml(sub.text)}</span>
${constraints}
<button data-gesture="constraint_edit" data-sub-id="${escapeHtml(sub.sub_id)}">constrain</button>
<button data-gesture="remove_button" data-sub-id="${escapeHtml(sub.sub_id)}">remove</button>
</li>`;
    })
    .join("\n");
  const body = `<ol class="plan">
${rows}
</ol>
<form data-gesture="add_form">
<input name="text" placeholder="new sub-query">
<button type="submit">add</button>
</form>`;
  return panelShell(view, "decomposition", "Query plan", body);
}

function renderEvidencePanel(view: SessionView, evidence: EvidenceSetRecord): string {
  const lists = Object.entries(evidence.per_subquery)
    .map(([subId, list]) => {
      const rows = list.entries
        .map((entry) => {
          const chips = LABELS.map((label) => {
            const active = entry.label === label ? " active" : "";
            return `<button class="chip${active}" data-gesture="label_chip" data-sub-id="${escapeHtml(subId)}" data-chunk-id="${escapeHtml(entry.chunk_id)}" data-label="${label}">${label.replace("_", " ")}</button>`;
          }).join("");
          const pin = entry.pin !== null ? `<span class="pin">pinned #${entry.pin}</span>` : "";
          return `<li data-chunk-id="${escapeHtml(entry.chunk_id)}" draggable="true" data-gesture="evidence_drag" data-sub-id="${escapeHtml(subId)}">
<span class="rank">${entry.rank}</span>
<span class="chunk">${escapeHtml(entry.chunk_id)}</span>
<span class="score">${entry.score.toFixed(4)}</span>
${pin}${chips}
</li>`;
        })
        .join("\n");
      return `<div class="evidence-list" data-sub-id="${escapeHtml(subId)}"><h3>${escapeHtml(subId)}</h3><ol>
${rows}
</ol></div>`;
    })
    .join("\n");
  const f = evidence.active_filter;
  const filterSummary = [
    f.domain_allow ? `allow: ${f.domain_allow.join(", ")}` : null,
    f.domain_block ? `block: ${f.domain_block.join(", ")}` : null,
    f.time_from || f.time_to ? `time: ${f.time_from ?? "…"} → ${f.time_to ?? "…"}` : null,
  ]
    .filter((part) => part !== null)
    .join(" · ");
  const body = `${lists}
<form data-gesture="filter_form" class="filter">
<span class="filter-summary">${escapeHtml(filterSummary || "no filter")}</span>
<input name="domain_allow" placeholder="allow domains">
<input name="domain_block" placeholder="block domains">
<input name="time_from" placeholder="from (YYYY-MM-DD)">
<input name="time_to" placeholder="to (YYYY-MM-DD)">
<button type="submit">apply filter</button>
</form>`;
  return panelShell(view, "retrieval", "Evidence", body);
}

function renderAnswerPanel(view: SessionView, answer: AnswerRecord): string {
  const sections = answer.sections
    .map((section) => {
      const cites = section.citations.map((c) => `<cite>${escapeHtml(c)}</cite>`).join(" ");
      const note = section.correction_note
        ? `<p class="correction-note">${escapeHtml(section.correction_note)}</p>`
        : "";
      const diff = view.editDiffs
        .filter((d) => d.sectionId === section.section_id)
        .map(
          (d) => `<details class="diff"><summary>edit diff</summary>
<del>${escapeHtml(d.before)}</del>
<ins>${escapeHtml(d.after)}</ins>
</details>`,
        )
        .join("\n");
      return `<article data-section-id="${escapeHtml(section.section_id)}" data-validation="${section.validation_state}">
<pre class="section-text">${escapeHtml(section.text)}</pre>
${cites}${note}${diff}
<button data-gesture="flag_note" data-section-id="${escapeHtml(section.section_id)}">flag fact</button>
<button data-gesture="inline_edit" data-section-id="${escapeHtml(section.section_id)}">edit</button>
</article>`;
    })
    .join("\n");
  const style = answer.style;
  const pick = (name: string, options: string[], current: string) =>
    `<select name="${name}">${options
      .map((o) => `<option value="${o}"${o === current ? " selected" : ""}>${o}</option>`)
      .join("")}</select>`;
  const body = `${sections}
<form data-gesture="style_picker" class="style">
${pick("tone", ["neutral", "formal", "casual"], style.tone)}
${pick("verbosity", ["brief", "normal", "detailed"], style.verbosity)}
${pick("layout", ["prose", "bullets"], style.layout)}
<button type="submit">restyle</button>
</form>
<footer class="rating">
<button data-gesture="thumb" data-value="like">like</button>
<button data-gesture="thumb" data-value="dislike">dislike</button>
</footer>`;
  return panelShell(view, "generation", "Answer", body);
}

function renderRail(view: SessionView): string {
  const cards = view.proposals
    .map((p) => {
      const controls =
        p.status === "pending"
          ? `<button data-proposal-decision="accept" data-proposal-id="${escapeHtml(p.proposal_id)}">accept</button>
<button data-proposal-decision="reject" data-proposal-id="${escapeHtml(p.proposal_id)}">reject</button>`
          : `<span class="proposal-status">${p.status}</span>`;
      return `<div class="proposal" data-proposal-id="${escapeHtml(p.proposal_id)}" data-status="${p.status}">
<span class="badge badge-shadow-agent">shadow agent</span>
<p class="rationale">${escapeHtml(p.rationale)}</p>
<p class="proposal-action">${p.event.action.kind} (${p.stage}) · confidence ${p.confidence.toFixed(2)}</p>
${controls}
</div>`;
    })
    .join("\n");
  const empty = view.proposals.length === 0 ? '<p class="no-suggestions">no suggestions</p>' : "";
  const entries = timelineEntries(view)
    .map(
      (e) => `<li data-seq="${e.seq}"><span class="badge badge-${e.badge.replace(" ", "-")}">${e.badge}</span> ${escapeHtml(e.label)}</li>`,
    )
    .join("\n");
  return `<aside class="rail">
<button data-action="toggle-mode">mode: ${view.mode}</button>
<h2>Agent</h2>
${cards}${empty}
<h2>Timeline</h2>
<ol class="timeline">
${entries}
</ol>
</aside>`;
}

function renderBanner(view: SessionView): string {
  if (!view.banner) {
    return "";
  }
  const { kind, code, message } = view.banner;
  const codeTag = code ? `<code class="reason-code">${escapeHtml(code)}</code> ` : "";
  const retry =
    kind === "retry"
      ? `<button data-action="${view.pendingRetry ? "retry-pending" : "refresh"}">retry</button>`
      : "";
  return `<div class="banner banner-${kind}">${codeTag}${escapeHtml(message)} ${retry}</div>`;
}

export function renderConsole(view: SessionView): string {
  const session = view.session;
  if (!session) {
    return `<div class="console" data-mode="${view.mode}">${renderBanner(view)}<p class="empty">no session</p></div>`;
  }
  return `<div class="console" data-mode="${view.mode}" data-stale="${view.stale}" data-session-id="${escapeHtml(session.session_id)}">
${renderBanner(view)}
<h1>${escapeHtml(session.query.text)}</h1>
<div class="panels">
${renderPlanPanel(view, session.plan)}
${renderEvidencePanel(view, session.evidence)}
${renderAnswerPanel(view, session.answer)}
</div>
${renderRail(view)}
</div>`;
}

// Sanity hook for tests: the affordances a stage's panel may render.
export function affordancesForStage(stage: PipelineStage | "final"): string[] {
  return gesturesForStage(stage);
}
