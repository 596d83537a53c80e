// Contract tests against a real running serve instance: the console's data
// layer (api.ts + views.ts) must reconstruct every view from API responses.
//
// One recipient account is shared across tests: the bundled scenario's doors
// display that first account's color code, exactly like the printed code on a
// real door, so every order for this recipient can complete.

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import {
  ApiError,
  ConsoleApi,
  NotificationPoller,
  TrackPoller,
  type UserAccount,
} from "../src/api.js";
import {
  buildNotificationViews,
  buildTrackView,
  projectPath,
} from "../src/views.js";
import { type RunningServer, startServer, until } from "./harness.js";

const DELIVERY_ID = /^[A-HJ-NP-Z2-9]{10}$/;
const TERMINAL = new Set(["PackageReceived", "NotDelivered", "MissedDelivery"]);

let server: RunningServer;
let api: ConsoleApi;
let recipient: UserAccount;

beforeAll(async () => {
  server = await startServer();
  api = new ConsoleApi(server.baseUrl);
  recipient = await api.createUser("alice", "bldg-1", b64("face:alice"));
}, 40_000);

afterAll(async () => {
  await server?.stop();
});

function b64(text: string): string {
  return Buffer.from(text).toString("base64");
}

function placeOrder() {
  return api.placeOrder(recipient.user_id, "3 Quad Lane North Campus");
}

describe("order flow", () => {
  it("renders a format-valid deliveryID and a color swatch", async () => {
    expect(recipient.color_code.rgb).toHaveLength(3);
    expect(recipient.color_code.index).toBe(0);
    const order = await placeOrder();
    expect(order.delivery_id).toMatch(DELIVERY_ID);
    expect(order.status).toBe("Placed");
    expect(order.color_code).toEqual(recipient.color_code);
  });

  it("surfaces unresolvable_address inline", async () => {
    const failure = await api
      .placeOrder(recipient.user_id, "99 Nowhere Plaza")
      .catch((err) => err);
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).envelope.error).toBe("unresolvable_address");
  });
});

describe("depot flow and live tracking", () => {
  it("dispatch flips status and the live view sees fresh samples", async () => {
    const order = await placeOrder();

    const confirmed = await api.dispatch(order.delivery_id, "depot-1");
    expect(confirmed.building_id).toBe("bldg-1");
    const track = await api.getTrack(order.delivery_id);
    expect(["Dispatched", "InFlight", "PackageReceived"]).toContain(track.status);

    // live view receives new samples within one telemetry period (1 s sim,
    // unpaced wall time; allow a generous wall deadline)
    const poller = new TrackPoller(api, order.delivery_id);
    await until(async () => {
      await poller.poll();
      return poller.samples.length > 0 ? poller.samples : null;
    }, 15_000);
    expect(poller.samples[0].t).toBeLessThanOrEqual(3.0);

    const finalTrack = await until(async () => {
      const t = await api.getTrack(order.delivery_id);
      return TERMINAL.has(t.status) ? t : null;
    }, 30_000);
    expect(finalTrack.status).toBe("PackageReceived");

    const view = buildTrackView(finalTrack);
    expect(view.banner).toBe("Package Received");
    expect(view.terminal).toBe(true);
    expect(view.timeline[view.timeline.length - 1].state).toBe("returning_to_depot");
  }, 60_000);

  it("incremental polling never yields duplicate samples", async () => {
    const order = await placeOrder();
    await api.dispatch(order.delivery_id, "depot-1");
    const poller = new TrackPoller(api, order.delivery_id);
    await until(async () => {
      await poller.poll();
      return TERMINAL.has(poller.status) ? true : null;
    }, 30_000);
    await poller.poll(); // extra poll after terminal: delta must stay empty
    const times = poller.samples.map((s) => s.t);
    expect(new Set(times).size).toBe(times.length);
    expect([...times].sort((a, b) => a - b)).toEqual(times);
  }, 60_000);

  it("rejects a repeat dispatch with an inline conflict envelope", async () => {
    const order = await placeOrder();
    await api.dispatch(order.delivery_id, "depot-1");
    const failure = await api.dispatch(order.delivery_id, "depot-1").catch((e) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).envelope.error).toBe("conflict");
  }, 30_000);

  it("unknown delivery id renders the empty-state path", async () => {
    const failure = await api.getTrack("ZZZZZZZZZ2").catch((e) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).status).toBe(404);
  });
});

describe("notification center", () => {
  it("shows Accept Delivery when the mission reaches the door", async () => {
    const order = await placeOrder();
    await api.dispatch(order.delivery_id, "depot-1");

    const poller = new NotificationPoller(api, recipient.user_id);
    const accept = await until(async () => {
      await poller.poll();
      const hit = poller.notifications.find(
        (n) => n.kind === "Accept Delivery" && n.delivery_id === order.delivery_id,
      );
      return hit ?? null;
    }, 30_000);

    const views = buildNotificationViews(poller.notifications, accept.timestamp + 10);
    const acceptView = views.find(
      (v) => v.kind === "Accept Delivery" && v.deliveryId === order.delivery_id,
    );
    expect(acceptView?.actionable).toBe(true);
    expect(acceptView?.countdownS).toBe(590);

    await until(async () => {
      await poller.poll();
      return poller.notifications.some(
        (n) => n.kind === "Delivered" && n.delivery_id === order.delivery_id,
      )
        ? true
        : null;
    }, 30_000);
    const kinds = poller.notifications
      .filter((n) => n.delivery_id === order.delivery_id)
      .map((n) => n.kind);
    expect(kinds).toEqual(["Accept Delivery", "Delivered"]);
  }, 60_000);

  it("renders de-duplicated redeliveries once", async () => {
    const note = {
      seq: 1,
      user_id: "u-1",
      kind: "Accept Delivery",
      delivery_id: "ABCDEFGHJ2",
      timestamp: 100,
    };
    const views = buildNotificationViews([note, { ...note, seq: 2 }], 110);
    expect(views).toHaveLength(1);
  });
});

describe("hard refresh reconstruction", () => {
  it("rebuilds every view from the API alone", async () => {
    const order = await placeOrder();
    await api.dispatch(order.delivery_id, "depot-1");
    await until(async () => {
      const t = await api.getTrack(order.delivery_id);
      return TERMINAL.has(t.status) ? t : null;
    }, 30_000);

    // simulate the refresh: brand-new client, no carried state
    const freshApi = new ConsoleApi(server.baseUrl);
    const track = await freshApi.getTrack(order.delivery_id);
    const view = buildTrackView(track);
    expect(view.terminal).toBe(true);
    expect(view.path.length).toBeGreaterThan(10);
    expect(view.batteryPercent).not.toBeNull();

    const notes = await freshApi.getNotifications(recipient.user_id);
    const rebuilt = buildNotificationViews(notes, Date.now() / 1000).filter(
      (v) => v.deliveryId === order.delivery_id,
    );
    expect(rebuilt.map((v) => v.kind)).toEqual(["Accept Delivery", "Delivered"]);

    const face = await fetch(freshApi.faceUrl(order.delivery_id));
    expect(await face.text()).toBe("face:alice");
  }, 60_000);
});

describe("view helpers", () => {
  it("projects a path into the schematic viewBox", () => {
    const points = projectPath([
      { lat: 19.1, lon: 72.9 },
      { lat: 19.101, lon: 72.9 },
    ]);
    expect(points).toHaveLength(2);
    for (const p of points) {
      expect(p.x).toBeGreaterThanOrEqual(0);
      expect(p.x).toBeLessThanOrEqual(100);
      expect(p.y).toBeGreaterThanOrEqual(0);
      expect(p.y).toBeLessThanOrEqual(100);
    }
    // northward motion goes up the screen
    expect(points[1].y).toBeLessThan(points[0].y);
  });

  it("awaiting-telemetry state for an empty track", () => {
    const view = buildTrackView({ delivery_id: "X", status: "Dispatched", samples: [] });
    expect(view.awaitingTelemetry).toBe(true);
    expect(view.position).toBeNull();
    expect(view.banner).toBeNull();
  });
});
