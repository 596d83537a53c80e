// Pure view-model builders. Every view is a function of API responses only,
// so a hard refresh reconstructs the exact same models.

import type { ColorCode, Notification, TelemetrySample, Track } from "./api.js";

export const TERMINAL_STATUSES = new Set([
  "PackageReceived",
  "NotDelivered",
  "MissedDelivery",
]);

export const STATUS_BANNERS: Record<string, string> = {
  PackageReceived: "Package Received",
  NotDelivered: "Not delivered",
  MissedDelivery: "Missed delivery",
};

export const AUTH_WINDOW_S = 600;

export interface TrackView {
  status: string;
  banner: string | null;
  terminal: boolean;
  awaitingTelemetry: boolean;
  position: { lat: number; lon: number; alt: number } | null;
  batteryPercent: number | null;
  missionState: string | null;
  path: Array<{ lat: number; lon: number }>;
  timeline: Array<{ t: number; state: string }>;
}

export function buildTrackView(track: Track): TrackView {
  const samples = track.samples;
  const last = samples.length > 0 ? samples[samples.length - 1] : null;
  const timeline: Array<{ t: number; state: string }> = [];
  for (const sample of samples) {
    if (timeline.length === 0 || timeline[timeline.length - 1].state !== sample.state) {
      timeline.push({ t: sample.t, state: sample.state });
    }
  }
  return {
    status: track.status,
    banner: STATUS_BANNERS[track.status] ?? null,
    terminal: TERMINAL_STATUSES.has(track.status),
    awaitingTelemetry: samples.length === 0,
    position: last ? { lat: last.lat, lon: last.lon, alt: last.alt } : null,
    batteryPercent: last ? Math.round(last.battery * 100) : null,
    missionState: last ? last.state : null,
    path: samples.map((s) => ({ lat: s.lat, lon: s.lon })),
    timeline,
  };
}

export interface NotificationView {
  kind: string;
  deliveryId: string;
  timestamp: number;
  actionable: boolean;
  countdownS: number | null;
}

/** "Accept Delivery" carries a live countdown toward the auth deadline. */
export function buildNotificationViews(
  notifications: Notification[],
  nowEpochS: number,
): NotificationView[] {
  const seen = new Set<string>();
  const views: NotificationView[] = [];
  for (const note of notifications) {
    const key = `${note.delivery_id}/${note.kind}`;
    if (seen.has(key)) {
      continue; // render de-duplicated redeliveries once
    }
    seen.add(key);
    const actionable = note.kind === "Accept Delivery";
    let countdownS: number | null = null;
    if (actionable) {
      countdownS = Math.max(0, Math.round(AUTH_WINDOW_S - (nowEpochS - note.timestamp)));
    }
    views.push({
      kind: note.kind,
      deliveryId: note.delivery_id,
      timestamp: note.timestamp,
      actionable,
      countdownS,
    });
  }
  return views;
}

export function swatchCss(code: ColorCode): string {
  const [r, g, b] = code.rgb;
  return `rgb(${r}, ${g}, ${b})`;
}

/** Scale lat/lon samples into a unit viewBox for the schematic map. */
export function projectPath(
  path: Array<{ lat: number; lon: number }>,
  size = 100,
  pad = 8,
): Array<{ x: number; y: number }> {
  if (path.length === 0) {
    return [];
  }
  const lats = path.map((p) => p.lat);
  const lons = path.map((p) => p.lon);
  const minLat = Math.min(...lats);
  const maxLat = Math.max(...lats);
  const minLon = Math.min(...lons);
  const maxLon = Math.max(...lons);
  const span = Math.max(maxLat - minLat, maxLon - minLon, 1e-9);
  const scale = (size - 2 * pad) / span;
  return path.map((p) => ({
    x: pad + (p.lon - minLon) * scale,
    y: size - pad - (p.lat - minLat) * scale,
  }));
}

export function batteryLabel(sample: TelemetrySample): string {
  return `${Math.round(sample.battery * 100)}%`;
}
