// Browser glue: wires DOM events to gestures and repaints the whole
// console after every change. Crude full-repaint is deliberate; this is
// a debugging surface and the session records are small.

import { fetchTransport, GatewayClient, subscribeEvents } from "./api.js";
import type { Gesture } from "./gestures.js";
import { dragAbove, planDrop } from "./gestures.js";
import { SessionController } from "./controller.js";
import { renderConsole } from "./render.js";
import type { Layout, RateValue, RelevanceLabel, Tone, Verbosity } from "./types.js";

function baseUrl(): string {
  const meta = document.querySelector('meta[name="gateway-base"]');
  return meta?.getAttribute("content") || "";
}

function mount(): void {
  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app mount point");
  }
  const base = baseUrl();
  const client = new GatewayClient(fetchTransport(base));
  const controller = new SessionController(client);
  let dragSubId: string | null = null;
  let dragChunk: { subId: string; chunkId: string } | null = null;

  const paint = () => {
    root.innerHTML = renderConsole(controller.view);
  };

  const act = async (work: Promise<unknown>) => {
    paint(); // show optimistic marks immediately
    await work;
    paint();
  };

  const gestureFromClick = (el: HTMLElement): Gesture | null => {
    const kind = el.getAttribute("data-gesture");
    const session = controller.view.session;
    if (!kind || !session) return null;
    switch (kind) {
      case "remove_button":
        return { gesture: "remove_button", subId: el.getAttribute("data-sub-id")! };
      case "constraint_edit": {
        const subId = el.getAttribute("data-sub-id")!;
        const key = el.getAttribute("data-key") ?? window.prompt("constraint key") ?? "";
        if (!key) return null;
        const value = window.prompt(`value for ${key}`) ?? "";
        if (!value) return null;
        return { gesture: "constraint_edit", subId, key, value };
      }
      case "label_chip":
        return {
          gesture: "label_chip",
          subId: el.getAttribute("data-sub-id")!,
          chunkId: el.getAttribute("data-chunk-id")!,
          label: el.getAttribute("data-label") as RelevanceLabel,
        };
      case "flag_note": {
        const note = window.prompt("what is wrong here?") ?? "";
        if (!note) return null;
        return { gesture: "flag_note", sectionId: el.getAttribute("data-section-id")!, note };
      }
      case "inline_edit": {
        const sectionId = el.getAttribute("data-section-id")!;
        const current = session.answer.sections.find((s) => s.section_id === sectionId);
        const newText = window.prompt("replacement text", current?.text ?? "");
        if (newText === null) return null;
        return { gesture: "inline_edit", sectionId, newText };
      }
      case "thumb":
        return {
          gesture: "thumb",
          value: el.getAttribute("data-value") as RateValue,
          comment: window.prompt("any comment? (optional)") || null,
        };
      default:
        return null;
    }
  };

  root.addEventListener("click", (ev) => {
    const el = (ev.target as HTMLElement).closest("[data-gesture],[data-action],[data-proposal-decision]");
    if (!(el instanceof HTMLElement)) return;
    const decision = el.getAttribute("data-proposal-decision");
    if (decision === "accept" || decision === "reject") {
      void act(controller.decide(el.getAttribute("data-proposal-id")!, decision));
      return;
    }
    const action = el.getAttribute("data-action");
    if (action === "toggle-mode") {
      controller.toggleMode();
      if (controller.view.mode === "shadow") {
        void act(
          Promise.all(
            (["decomposition", "retrieval", "generation"] as const).map((s) => controller.loadProposals(s)),
          ),
        );
      } else {
        paint();
      }
      return;
    }
    if (action === "retry-pending") {
      void act(controller.retryPending());
      return;
    }
    if (action === "refresh") {
      void act(controller.refresh());
      return;
    }
    if (el.tagName === "BUTTON" && el.getAttribute("data-gesture")) {
      const gesture = gestureFromClick(el);
      if (gesture) void act(controller.submit(gesture));
    }
  });

  root.addEventListener("submit", (ev) => {
    const form = ev.target as HTMLFormElement;
    ev.preventDefault();
    const kind = form.getAttribute("data-gesture");
    const data = new FormData(form);
    const text = (name: string) => String(data.get(name) ?? "").trim();
    if (kind === "add_form") {
      const session = controller.view.session;
      if (!text("text") || !session) return;
      void act(
        controller.submit({
          gesture: "add_form",
          text: text("text"),
          insertPosition: session.plan.sub_queries.length,
        }),
      );
    } else if (kind === "filter_form") {
      const split = (raw: string) =>
        raw ? raw.split(",").map((part) => part.trim()).filter(Boolean) : null;
      void act(
        controller.submit({
          gesture: "filter_form",
          domainAllow: split(text("domain_allow")),
          domainBlock: split(text("domain_block")),
          timeFrom: text("time_from") || null,
          timeTo: text("time_to") || null,
        }),
      );
    } else if (kind === "style_picker") {
      void act(
        controller.submit({
          gesture: "style_picker",
          tone: text("tone") as Tone,
          verbosity: text("verbosity") as Verbosity,
          layout: text("layout") as Layout,
        }),
      );
    }
  });

  root.addEventListener("dragstart", (ev) => {
    const row = (ev.target as HTMLElement).closest("[data-gesture='row_drag'],[data-gesture='evidence_drag']");
    if (!(row instanceof HTMLElement)) return;
    if (row.getAttribute("data-gesture") === "row_drag") {
      dragSubId = row.getAttribute("data-sub-id");
    } else {
      dragChunk = { subId: row.getAttribute("data-sub-id")!, chunkId: row.getAttribute("data-chunk-id")! };
    }
  });
  root.addEventListener("dragover", (ev) => ev.preventDefault());
  root.addEventListener("drop", (ev) => {
    ev.preventDefault();
    const session = controller.view.session;
    if (!session) return;
    const target = (ev.target as HTMLElement).closest("[data-sub-id],[data-chunk-id]");
    if (!(target instanceof HTMLElement)) return;
    if (dragSubId && target.getAttribute("data-sub-id") && !target.getAttribute("data-chunk-id")) {
      const order = session.plan.sub_queries.map((s) => s.sub_id);
      const toIndex = order.indexOf(target.getAttribute("data-sub-id")!);
      if (toIndex >= 0) {
        void act(controller.submit(planDrop(order, dragSubId, toIndex)));
      }
    } else if (dragChunk && target.getAttribute("data-chunk-id")) {
      const list = session.evidence.per_subquery[dragChunk.subId];
      if (list) {
        void act(
          controller.submit(
            dragAbove(list, dragChunk.subId, dragChunk.chunkId, target.getAttribute("data-chunk-id")!),
          ),
        );
      }
    }
    dragSubId = null;
    dragChunk = null;
  });

  const params = new URLSearchParams(window.location.search);
  const sessionId = params.get("session");
  const boot = sessionId
    ? controller.attach(sessionId)
    : controller.open(params.get("q") ?? "Plan a trip to attend SIGIR 2025", params.get("user") ?? "anonymous");
  void boot.then(() => {
    paint();
    const sid = controller.view.session?.session_id;
    if (sid) {
      subscribeEvents(base, sid, controller.view.feedCursor, (record) => {
        void controller.onFeedRecord(record).then(paint);
      }, client);
    }
  });
  paint();
}

mount();
