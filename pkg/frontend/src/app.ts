// Single-page console: recipient and depot-operator views over one API.
// Session identity (role, user id, watched delivery) lives in the URL hash so
// a hard refresh rebuilds every view purely from API responses.

import { ApiError, ConsoleApi, NotificationPoller, TrackPoller } from "./api.js";
import {
  buildNotificationViews,
  buildTrackView,
  projectPath,
  swatchCss,
} from "./views.js";

const api = new ConsoleApi(window.location.origin);

interface Session {
  role: "recipient" | "operator";
  userId?: string;
  watch?: string;
}

function readSession(): Session {
  const params = new URLSearchParams(window.location.hash.slice(1));
  const role = params.get("role") === "operator" ? "operator" : "recipient";
  return {
    role,
    userId: params.get("user") ?? undefined,
    watch: params.get("watch") ?? undefined,
  };
}

function writeSession(session: Session): void {
  const params = new URLSearchParams();
  params.set("role", session.role);
  if (session.userId) params.set("user", session.userId);
  if (session.watch) params.set("watch", session.watch);
  window.location.hash = params.toString();
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: Array<Node | string>
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

function errorBox(target: HTMLElement, err: unknown): void {
  const message =
    err instanceof ApiError ? `${err.envelope.error}: ${err.envelope.message}` : String(err);
  target.querySelectorAll(".error").forEach((n) => n.remove());
  target.append(el("p", { class: "error" }, message));
}

async function fileToBase64(file: File): Promise<string> {
  const buffer = await file.arrayBuffer();
  let binary = "";
  for (const byte of new Uint8Array(buffer)) {
    binary += String.fromCharCode(byte);
  }
  return btoa(binary);
}

// --- recipient view ----------------------------------------------------------

function recipientView(root: HTMLElement, session: Session): void {
  const registerCard = el("section", { class: "card" },
    el("h2", {}, "Create account"),
  );
  const nameInput = el("input", { placeholder: "display name", value: "alice" });
  const buildingInput = el("input", { placeholder: "building id", value: "bldg-1" });
  const faceInput = el("input", { type: "file" });
  const registerButton = el("button", {}, "Register");
  registerCard.append(nameInput, buildingInput, faceInput, registerButton);

  const orderCard = el("section", { class: "card" }, el("h2", {}, "Place order"));
  const addressInput = el("input", {
    placeholder: "delivery address",
    value: "3 Quad Lane North Campus",
    size: "40",
  });
  const orderButton = el("button", {}, "Order");
  const confirmation = el("div", { class: "confirmation" });
  orderCard.append(addressInput, orderButton, confirmation);

  const noticeCard = el("section", { class: "card" },
    el("h2", {}, "Notifications"));
  const noticeList = el("ul", { class: "notifications" });
  noticeCard.append(noticeList);

  registerButton.addEventListener("click", async () => {
    try {
      const file = faceInput.files?.[0];
      const face = file ? await fileToBase64(file) : btoa("placeholder-face");
      const account = await api.createUser(
        nameInput.value, buildingInput.value, face);
      session.userId = account.user_id;
      writeSession(session);
      registerCard.append(
        el("p", {}, `account ${account.user_id} — your door color: `),
        el("span", {
          class: "swatch",
          style: `background:${swatchCss(account.color_code)}`,
          title: `palette index ${account.color_code.index}`,
        }),
        el("button", { class: "print" }, "Print color code"),
      );
      registerCard.querySelector(".print")?.addEventListener("click", () => window.print());
      startNotificationLoop(session);
    } catch (err) {
      errorBox(registerCard, err);
    }
  });

  orderButton.addEventListener("click", async () => {
    confirmation.replaceChildren();
    if (!session.userId) {
      errorBox(orderCard, new Error("register first"));
      return;
    }
    try {
      const order = await api.placeOrder(session.userId, addressInput.value);
      confirmation.append(
        el("p", {}, `deliveryID: `, el("strong", {}, order.delivery_id)),
        el("p", {}, "affix your color code to the door: "),
        el("span", {
          class: "swatch",
          style: `background:${swatchCss(order.color_code)}`,
        }),
      );
    } catch (err) {
      errorBox(orderCard, err);
    }
  });

  let notificationTimer: number | undefined;

  function startNotificationLoop(current: Session): void {
    if (!current.userId || notificationTimer !== undefined) return;
    const poller = new NotificationPoller(api, current.userId);
    const tick = async () => {
      try {
        await poller.poll();
      } catch {
        // polling fallback: keep retrying on transient drops
      }
      const views = buildNotificationViews(poller.notifications, Date.now() / 1000);
      noticeList.replaceChildren(
        ...views.map((view) =>
          el("li", { class: view.actionable ? "actionable" : "" },
            el("strong", {}, view.kind),
            ` — ${view.deliveryId}`,
            view.countdownS !== null
              ? el("span", { class: "countdown" }, ` ${view.countdownS}s to authenticate`)
              : "",
          ),
        ),
      );
    };
    void tick();
    notificationTimer = window.setInterval(tick, 1000);
  }

  root.append(registerCard, orderCard, noticeCard);
  startNotificationLoop(session);
}

// --- depot operator view -----------------------------------------------------

function operatorView(root: HTMLElement, session: Session): void {
  const dispatchCard = el("section", { class: "card" },
    el("h2", {}, "Dispatch delivery"));
  const idInput = el("input", { placeholder: "deliveryID", size: "16" });
  const operatorInput = el("input", { value: "depot-1", size: "10" });
  const dispatchButton = el("button", {}, "Dispatch");
  const statusChip = el("span", { class: "chip" }, "—");
  dispatchCard.append(idInput, operatorInput, dispatchButton, statusChip);

  const liveCard = el("section", { class: "card" }, el("h2", {}, "Live tracking"));
  const banner = el("p", { class: "banner" });
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", "0 0 100 100");
  svg.setAttribute("class", "map");
  const stats = el("p", { class: "stats" }, "awaiting telemetry");
  const timeline = el("ol", { class: "timeline" });
  liveCard.append(banner, svg, stats, timeline);

  let pollTimer: number | undefined;

  function watch(deliveryId: string): void {
    session.watch = deliveryId;
    writeSession(session);
    if (pollTimer !== undefined) {
      window.clearInterval(pollTimer);
    }
    const poller = new TrackPoller(api, deliveryId);
    const tick = async () => {
      try {
        await poller.poll();
      } catch (err) {
        errorBox(liveCard, err);
        return;
      }
      const view = buildTrackView({
        delivery_id: deliveryId,
        status: poller.status,
        samples: poller.samples,
      });
      statusChip.textContent = view.status;
      banner.textContent = view.banner ?? "";
      if (view.awaitingTelemetry) {
        stats.textContent = "awaiting telemetry (map centered on depot)";
      } else if (view.position) {
        stats.textContent =
          `lat ${view.position.lat.toFixed(6)} lon ${view.position.lon.toFixed(6)} ` +
          `alt ${view.position.alt.toFixed(1)} m — battery ${view.batteryPercent}% — ` +
          `${view.missionState}`;
      }
      const points = projectPath(view.path);
      svg.replaceChildren();
      if (points.length > 1) {
        const poly = document.createElementNS("http://www.w3.org/2000/svg", "polyline");
        poly.setAttribute("points", points.map((p) => `${p.x},${p.y}`).join(" "));
        poly.setAttribute("class", "path");
        svg.append(poly);
      }
      if (points.length > 0) {
        const last = points[points.length - 1];
        const marker = document.createElementNS("http://www.w3.org/2000/svg", "circle");
        marker.setAttribute("cx", String(last.x));
        marker.setAttribute("cy", String(last.y));
        marker.setAttribute("r", "2.5");
        marker.setAttribute("class", "marker");
        svg.append(marker);
      }
      timeline.replaceChildren(
        ...view.timeline.map((entry) =>
          el("li", {}, `${entry.t.toFixed(1)}s — ${entry.state}`)),
      );
      if (view.terminal && pollTimer !== undefined) {
        window.clearInterval(pollTimer);
      }
    };
    void tick();
    pollTimer = window.setInterval(tick, 1000);
  }

  dispatchButton.addEventListener("click", async () => {
    try {
      const confirmed = await api.dispatch(idInput.value.trim(), operatorInput.value.trim());
      statusChip.textContent = "Dispatched";
      watch(confirmed.delivery_id);
    } catch (err) {
      errorBox(dispatchCard, err);
    }
  });

  root.append(dispatchCard, liveCard);
  if (session.watch) {
    idInput.value = session.watch;
    watch(session.watch);
  }
}

// --- bootstrapping -------------------------------------------------------------

function render(): void {
  const root = document.getElementById("app");
  if (!root) return;
  root.replaceChildren();
  const session = readSession();
  const nav = el("nav", {},
    el("button", { class: session.role === "recipient" ? "active" : "" }, "Recipient"),
    el("button", { class: session.role === "operator" ? "active" : "" }, "Depot operator"),
  );
  const [recipientButton, operatorButton] = Array.from(nav.querySelectorAll("button"));
  recipientButton.addEventListener("click", () => {
    writeSession({ ...session, role: "recipient" });
    render();
  });
  operatorButton.addEventListener("click", () => {
    writeSession({ ...session, role: "operator" });
    render();
  });
  root.append(nav);
  if (session.role === "operator") {
    operatorView(root, session);
  } else {
    recipientView(root, session);
  }
}

window.addEventListener("DOMContentLoaded", render);
