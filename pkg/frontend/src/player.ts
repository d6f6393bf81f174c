// Full-screen video playback with ended-event gating.
//
// The server refuses ratings without playback_completed, and this class is
// the only source of that flag on the client: it flips to true exclusively
// inside the media `ended` event handler, so the form logic cannot fabricate
// it before the video actually finished.

export class VideoGate {
  readonly video: HTMLVideoElement;
  private ended = false;
  private replayCount = 0;
  private endedListeners: Array<() => void> = [];

  constructor(doc: Document) {
    this.video = doc.createElement("video");
    this.video.className = "study-video";
    this.video.preload = "auto";
    this.video.controls = false; // replay/pause via explicit buttons only
    this.video.addEventListener("ended", () => {
      this.ended = true;
      for (const listener of this.endedListeners) listener();
    });
  }

  /** True only after the current video fired `ended` at least once. */
  get playbackCompleted(): boolean {
    return this.ended;
  }

  get replays(): number {
    return this.replayCount;
  }

  onEnded(listener: () => void): void {
    this.endedListeners.push(listener);
  }

  load(mediaUrl: string): void {
    this.ended = false;
    this.replayCount = 0;
    this.video.src = mediaUrl;
    this.enterFullscreen();
    this.play();
  }

  /** Subjects may replay freely; each replay is counted for the audit log. */
  replay(): void {
    this.replayCount += 1;
    this.video.currentTime = 0;
    this.play();
  }

  pause(): void {
    this.video.pause();
  }

  private play(): void {
    const maybePromise = this.video.play() as Promise<void> | undefined;
    if (maybePromise && typeof maybePromise.catch === "function") {
      maybePromise.catch(() => {
        // autoplay refusal: the subject presses play via replay button
      });
    }
  }

  private enterFullscreen(): void {
    const el = this.video as HTMLVideoElement & {
      requestFullscreen?: () => Promise<void>;
      webkitRequestFullscreen?: () => void;
    };
    try {
      if (typeof el.requestFullscreen === "function") {
        el.requestFullscreen().catch(() => {});
      } else if (typeof el.webkitRequestFullscreen === "function") {
        el.webkitRequestFullscreen();
      }
    } catch {
      // jsdom and some browsers: fullscreen unavailable, keep inline
    }
  }
}
