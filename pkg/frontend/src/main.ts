/** DOM wiring: queue/dashboard tabs, card rendering, shortcuts, toasts. */

import { ApiClient, ReviewCard } from "./api.js";
import { buildDashboard } from "./dashboard.js";
import { ReviewQueue } from "./queue.js";

const api = new ApiClient();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showToast(message: string, kind: "info" | "error"): void {
  const toast = document.createElement("div");
  toast.className = `toast toast-${kind}`;
  toast.textContent = message;
  el("toasts").appendChild(toast);
  setTimeout(() => toast.remove(), 4000);
}

let editing = false;

function renderCard(card: ReviewCard | null): void {
  editing = false;
  el("edit-form").classList.add("hidden");
  const empty = el("queue-empty");
  const body = el("card");
  if (card === null) {
    empty.classList.remove("hidden");
    body.classList.add("hidden");
    return;
  }
  empty.classList.add("hidden");
  body.classList.remove("hidden");
  el("card-record-id").textContent = card.record_id;
  const badge = el("card-conflict-type");
  badge.textContent = card.conflict_type;
  badge.className = `badge badge-${card.conflict_type}`;
  el("card-question").textContent = card.question;
  el("card-answer").textContent = card.answer;
  el("card-base-question").textContent = card.provenance.base_question;
  el("card-base-answer").textContent = card.provenance.base_answer;
  const image = el<HTMLImageElement>("card-image");
  if (card.image_url) {
    image.src = card.image_url;
    image.classList.remove("hidden");
  } else {
    image.removeAttribute("src");
    image.classList.add("hidden");
  }
}

const annotatorId =
  new URLSearchParams(window.location.search).get("annotator") ?? "anonymous";

const queue = new ReviewQueue(api, annotatorId, {
  onCard: renderCard,
  onToast: showToast,
});

async function advanceAfter(decide: Promise<unknown>): Promise<void> {
  await decide;
  await queue.refill();
}

function openEditForm(): void {
  const card = queue.current();
  if (card === null) return;
  editing = true;
  el("edit-form").classList.remove("hidden");
  el<HTMLTextAreaElement>("edit-question").value = card.question;
  el<HTMLTextAreaElement>("edit-answer").value = card.answer;
  updateEditSubmitState();
  el<HTMLTextAreaElement>("edit-question").focus();
}

function updateEditSubmitState(): void {
  const card = queue.current();
  if (card === null) return;
  const question = el<HTMLTextAreaElement>("edit-question").value.trim();
  const answer = el<HTMLTextAreaElement>("edit-answer").value.trim();
  const changed =
    (question.length > 0 && question !== card.question) ||
    (answer.length > 0 && answer !== card.answer);
  el<HTMLButtonElement>("edit-submit").disabled = !changed;
}

async function submitEdit(): Promise<void> {
  const card = queue.current();
  if (card === null) return;
  const question = el<HTMLTextAreaElement>("edit-question").value.trim();
  const answer = el<HTMLTextAreaElement>("edit-answer").value.trim();
  const edits: { edited_question?: string; edited_answer?: string } = {};
  if (question && question !== card.question) edits.edited_question = question;
  if (answer && answer !== card.answer) edits.edited_answer = answer;
  await advanceAfter(queue.decide("edit", edits));
}

async function refreshDashboard(): Promise<void> {
  const payload = await api.fetchStats();
  const view = buildDashboard(payload);
  el("stat-total").textContent = String(view.total);
  el("stat-pending").textContent = String(view.pending);
  el("stat-accepted").textContent = String(view.accepted);
  el("stat-rejected").textContent = String(view.rejected);
  el("stat-edited").textContent = String(view.edited);
  el("stat-reviewed").textContent = view.reviewedPercent;
  el("stat-types").innerHTML = "";
  for (const row of view.typeRows) {
    const item = document.createElement("li");
    item.textContent = `${row.kind}: ${row.count} (${row.percent})`;
    el("stat-types").appendChild(item);
  }
}

function showTab(name: "queue" | "dashboard"): void {
  el("tab-queue").classList.toggle("active", name === "queue");
  el("tab-dashboard").classList.toggle("active", name === "dashboard");
  el("view-queue").classList.toggle("hidden", name !== "queue");
  el("view-dashboard").classList.toggle("hidden", name !== "dashboard");
  if (name === "dashboard") {
    refreshDashboard().catch((error) => showToast(String(error), "error"));
  }
}

function bindEvents(): void {
  el("tab-queue").addEventListener("click", () => showTab("queue"));
  el("tab-dashboard").addEventListener("click", () => showTab("dashboard"));
  el("btn-accept").addEventListener("click", () => advanceAfter(queue.decide("accept")));
  el("btn-reject").addEventListener("click", () => advanceAfter(queue.decide("reject")));
  el("btn-edit").addEventListener("click", openEditForm);
  el("edit-submit").addEventListener("click", () => submitEdit());
  el("edit-cancel").addEventListener("click", () => {
    editing = false;
    el("edit-form").classList.add("hidden");
  });
  el("edit-question").addEventListener("input", updateEditSubmitState);
  el("edit-answer").addEventListener("input", updateEditSubmitState);
  document.addEventListener("keydown", (event) => {
    if (editing || event.target instanceof HTMLTextAreaElement) {
      if (event.key === "Escape") {
        editing = false;
        el("edit-form").classList.add("hidden");
      }
      return;
    }
    if (event.key === "a") advanceAfter(queue.decide("accept"));
    if (event.key === "r") advanceAfter(queue.decide("reject"));
    if (event.key === "e") openEditForm();
  });
}

bindEvents();
showTab("queue");
queue.refill().catch((error) => showToast(String(error), "error"));
