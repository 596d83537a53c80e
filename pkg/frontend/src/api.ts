// Typed client over the coordination service HTTP API. The console never
// holds authoritative state: everything renders from these responses.

export interface ColorCode {
  index: number;
  rgb: [number, number, number];
}

export interface UserAccount {
  user_id: string;
  name: string;
  building_id: string;
  color_code: ColorCode;
  face_image_ref: string;
}

export interface OrderConfirmation {
  delivery_id: string;
  status: string;
  color_code: ColorCode;
}

export interface DispatchConfirmation {
  delivery_id: string;
  destination: { lat: number; lon: number };
  color_code: ColorCode;
  face_image_ref: string;
  building_id: string;
}

export interface TelemetrySample {
  t: number;
  lat: number;
  lon: number;
  alt: number;
  battery: number;
  state: string;
}

export interface Track {
  delivery_id: string;
  status: string;
  samples: TelemetrySample[];
}

export interface Notification {
  seq: number;
  user_id: string;
  kind: string;
  delivery_id: string;
  timestamp: number;
}

export interface ErrorEnvelope {
  error: string;
  message: string;
  detail: Record<string, unknown>;
}

export class ApiError extends Error {
  constructor(public envelope: ErrorEnvelope, public status: number) {
    super(`${envelope.error}: ${envelope.message}`);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  if (!response.ok) {
    let envelope: ErrorEnvelope;
    try {
      envelope = (await response.json()) as ErrorEnvelope;
    } catch {
      envelope = { error: "http_error", message: response.statusText, detail: {} };
    }
    throw new ApiError(envelope, response.status);
  }
  if (response.status === 204) {
    return undefined as T;
  }
  return (await response.json()) as T;
}

function post<T>(url: string, body: unknown): Promise<T> {
  return request<T>(url, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
}

export class ConsoleApi {
  constructor(public baseUrl: string) {}

  createUser(name: string, buildingId: string, faceImageBase64: string): Promise<UserAccount> {
    return post(`${this.baseUrl}/users`, {
      name,
      building_id: buildingId,
      face_image: faceImageBase64,
    });
  }

  placeOrder(userId: string, address: string): Promise<OrderConfirmation> {
    return post(`${this.baseUrl}/orders`, { user_id: userId, address });
  }

  dispatch(deliveryId: string, operatorId: string): Promise<DispatchConfirmation> {
    return post(`${this.baseUrl}/dispatch`, {
      delivery_id: deliveryId,
      operator_id: operatorId,
    });
  }

  getTrack(deliveryId: string, after?: number): Promise<Track> {
    const query = after === undefined ? "" : `?after=${after}`;
    return request(`${this.baseUrl}/track/${deliveryId}${query}`);
  }

  getNotifications(userId: string, after?: number): Promise<Notification[]> {
    const query = after === undefined ? "" : `?after=${after}`;
    return request(`${this.baseUrl}/notifications/${userId}${query}`);
  }

  faceUrl(deliveryId: string): string {
    return `${this.baseUrl}/face/${deliveryId}`;
  }
}

/** Incremental track poller; the `after` cursor guarantees no duplicates. */
export class TrackPoller {
  private after: number | undefined = undefined;
  samples: TelemetrySample[] = [];
  status = "";

  constructor(private api: ConsoleApi, private deliveryId: string) {}

  async poll(): Promise<TelemetrySample[]> {
    const track = await this.api.getTrack(this.deliveryId, this.after);
    this.status = track.status;
    if (track.samples.length > 0) {
      this.after = track.samples[track.samples.length - 1].t;
      this.samples.push(...track.samples);
    }
    return track.samples;
  }
}

/** Cursor-based notification poller with the same no-duplicates contract. */
export class NotificationPoller {
  private after = -1;
  notifications: Notification[] = [];

  constructor(private api: ConsoleApi, private userId: string) {}

  async poll(): Promise<Notification[]> {
    const fresh = await this.api.getNotifications(this.userId, this.after);
    for (const note of fresh) {
      if (note.seq > this.after) {
        this.after = note.seq;
        this.notifications.push(note);
      }
    }
    return fresh;
  }
}
